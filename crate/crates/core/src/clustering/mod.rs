//! Grouping participants: trust-dynamics clustering (standardize, PCA,
//! k-means) and demographic baselines, with the statistics used to
//! characterize the groups.

mod demographics;
mod kmeans;
mod pca;
mod standardize;
mod stats;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use demographics::{demographic_partition, DemographicCriterion, DemographicPartition};
pub use kmeans::{adjusted_rand_index, kmeans, silhouette, ClusterModel, KMeansOptions};
pub use pca::{fit_pca, PcaModel};
pub use standardize::{apply_standardizer, fit_standardizer, StandardizationParams};
pub use stats::{five_number, quantile, t_critical, welch_ttest, FiveNumber, TTestResult};

use crate::data::Archetype;
use crate::features::FeatureMatrix;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("feature {0} is constant")]
    ConstantFeature(usize),
    #[error("{n} points cannot form {k} clusters")]
    TooFewPoints { n: usize, k: usize },
    #[error("invalid cluster count {0}")]
    InvalidK(usize),
    #[error("{requested} components requested from {available} dimensions")]
    InvalidComponents { requested: usize, available: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("silhouette needs at least two non-empty clusters")]
    SingleCluster,
    #[error("cluster naming needs exactly 2 clusters, got {0}")]
    NotBinary(usize),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("missing demographic: {0}")]
    MissingDemographic(String),
}

/// Clusters for every k in `ks` and keeps the one with the largest mean
/// silhouette; ties go to the smaller k.
pub fn select_k(
    points: &DMatrix<f64>,
    ks: &[usize],
    opts: &KMeansOptions,
) -> Result<(usize, ClusterModel), ClusterError> {
    let mut sorted = ks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let max = *sorted.last().ok_or(ClusterError::InvalidK(0))?;
    if max > points.nrows() {
        return Err(ClusterError::TooFewPoints {
            n: points.nrows(),
            k: max,
        });
    }
    let mut best: Option<ClusterModel> = None;
    for k in sorted {
        if k < 2 {
            return Err(ClusterError::InvalidK(k));
        }
        let m = kmeans(points, k, opts)?;
        let s = m.silhouette.expect("k >= 2");
        if best
            .as_ref()
            .is_none_or(|b| s > b.silhouette.expect("k >= 2"))
        {
            best = Some(m);
        }
    }
    let m = best.expect("non-empty k range");
    Ok((m.k, m))
}

fn group_mean(col: &[f64], labels: &[usize], c: usize) -> f64 {
    let v: Vec<f64> = col
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == c)
        .map(|(x, _)| *x)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Names a two-cluster model: the cluster with the higher mean initial trust
/// is `Confident`. Ties fall to the higher mean building-phase trust without
/// pedestrians, then to the lower cluster index.
pub fn name_clusters(
    mut model: ClusterModel,
    features: &DMatrix<f64>,
) -> Result<ClusterModel, ClusterError> {
    if model.k != 2 {
        return Err(ClusterError::NotBinary(model.k));
    }
    let key = |j: usize| {
        let col: Vec<f64> = features.column(j).iter().copied().collect();
        [
            group_mean(&col, &model.labels, 0),
            group_mean(&col, &model.labels, 1),
        ]
    };
    let f1 = key(0);
    let f4 = key(3);
    let first_confident = if f1[0] != f1[1] {
        f1[0] > f1[1]
    } else if f4[0] != f4[1] {
        f4[0] > f4[1]
    } else {
        true
    };
    model.names = Some(if first_confident {
        vec![Archetype::Confident, Archetype::Skeptical]
    } else {
        vec![Archetype::Skeptical, Archetype::Confident]
    });
    Ok(model)
}

/// Number of principal components retained for trust-dynamics clustering.
pub const TRUST_PCA_COMPONENTS: usize = 3;

/// A fitted trust-dynamics clusterer: standardization, PCA and k-means on
/// the leading components. New participants are placed at the nearest
/// centroid in the fitted PCA space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustClusterer {
    pub standardizer: StandardizationParams,
    pub pca: PcaModel,
    pub model: ClusterModel,
}

impl TrustClusterer {
    /// Fits with a fixed `k`; k = 2 models are named.
    pub fn fit(
        features: &FeatureMatrix,
        k: usize,
        opts: &KMeansOptions,
    ) -> Result<Self, ClusterError> {
        let (standardizer, pca, scores) = Self::embed(features)?;
        let mut model = kmeans(&scores, k, opts)?;
        if k == 2 {
            model = name_clusters(model, &features.values)?;
        }
        Ok(TrustClusterer {
            standardizer,
            pca,
            model,
        })
    }

    /// Fits with k chosen by silhouette over `ks`.
    pub fn fit_select(
        features: &FeatureMatrix,
        ks: &[usize],
        opts: &KMeansOptions,
    ) -> Result<Self, ClusterError> {
        let (standardizer, pca, scores) = Self::embed(features)?;
        let (k, mut model) = select_k(&scores, ks, opts)?;
        if k == 2 {
            model = name_clusters(model, &features.values)?;
        }
        Ok(TrustClusterer {
            standardizer,
            pca,
            model,
        })
    }

    fn embed(
        features: &FeatureMatrix,
    ) -> Result<(StandardizationParams, PcaModel, DMatrix<f64>), ClusterError> {
        let standardizer = fit_standardizer(&features.values)?;
        let z = apply_standardizer(&standardizer, &features.values);
        let pca = fit_pca(&z, TRUST_PCA_COMPONENTS.min(z.ncols()))?;
        let scores = pca.project(&z);
        Ok((standardizer, pca, scores))
    }

    pub fn scores(&self, features: &FeatureMatrix) -> DMatrix<f64> {
        self.pca
            .project(&apply_standardizer(&self.standardizer, &features.values))
    }

    /// Cluster index for every row of `features`.
    pub fn assign(&self, features: &FeatureMatrix) -> Vec<usize> {
        let s = self.scores(features);
        (0..s.nrows())
            .map(|i| {
                let row: Vec<f64> = s.row(i).iter().copied().collect();
                self.model.assign(&row)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(centers: &[(f64, f64)], per: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = centers.len() * per;
        let mut x = DMatrix::zeros(n, 2);
        for i in 0..n {
            let c = centers[i % centers.len()];
            x[(i, 0)] = c.0 + rng.random_range(-0.5..0.5);
            x[(i, 1)] = c.1 + rng.random_range(-0.5..0.5);
        }
        x
    }

    #[test]
    fn select_three_blobs() {
        let x = blobs(&[(0.0, 0.0), (10.0, 0.0), (5.0, 9.0)], 10, 1);
        let (k, m) = select_k(&x, &[2, 3, 4, 5, 6], &KMeansOptions::default()).unwrap();
        assert_eq!(k, 3);
        assert_eq!(m.sizes(), vec![10, 10, 10]);
    }

    #[test]
    fn singleton_range() {
        let x = blobs(&[(0.0, 0.0), (10.0, 0.0), (5.0, 9.0)], 4, 2);
        let (k, _) = select_k(&x, &[2], &KMeansOptions::default()).unwrap();
        assert_eq!(k, 2);
        assert!(matches!(
            select_k(&x, &[2, 20], &KMeansOptions::default()),
            Err(ClusterError::TooFewPoints { .. })
        ));
    }

    fn two_cluster_model(labels: Vec<usize>) -> ClusterModel {
        ClusterModel {
            k: 2,
            centroids: DMatrix::zeros(2, 1),
            labels,
            wcss: 0.0,
            silhouette: None,
            names: None,
        }
    }

    fn features(f1: &[f64], f4: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(f1.len(), 12, |i, j| match j {
            0 => f1[i],
            3 => f4[i],
            _ => 0.0,
        })
    }

    #[test]
    fn higher_initial_trust_is_confident() {
        let f = features(&[80.0, 80.0, 55.0, 55.0], &[0.0; 4]);
        let m = name_clusters(two_cluster_model(vec![0, 0, 1, 1]), &f).unwrap();
        assert_eq!(m.names.unwrap(), vec![Archetype::Confident, Archetype::Skeptical]);
        let m = name_clusters(two_cluster_model(vec![1, 1, 0, 0]), &f).unwrap();
        assert_eq!(m.names.unwrap(), vec![Archetype::Skeptical, Archetype::Confident]);
    }

    #[test]
    fn naming_tie_breaks() {
        let f = features(&[60.0; 4], &[50.0, 50.0, 70.0, 70.0]);
        let m = name_clusters(two_cluster_model(vec![0, 0, 1, 1]), &f).unwrap();
        assert_eq!(m.name_of(1), Some(Archetype::Confident));
        let f = features(&[60.0; 4], &[50.0; 4]);
        let m = name_clusters(two_cluster_model(vec![0, 0, 1, 1]), &f).unwrap();
        assert_eq!(m.name_of(0), Some(Archetype::Confident));
    }

    #[test]
    fn naming_needs_two_clusters() {
        let mut m = two_cluster_model(vec![0, 1, 2]);
        m.k = 3;
        assert!(matches!(
            name_clusters(m, &features(&[1.0, 2.0, 3.0], &[0.0; 3])),
            Err(ClusterError::NotBinary(3))
        ));
    }
}
