//! Principal component analysis via eigendecomposition of the sample
//! covariance matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::ClusterError;

/// Eigenvalues at or below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// p x m, orthonormal columns in descending eigenvalue order.
    pub loadings: DMatrix<f64>,
    /// One ratio per input dimension, descending, summing to 1.
    pub explained_variance_ratios: Vec<f64>,
    /// Numerical rank of the covariance matrix.
    pub rank: usize,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank < self.n_components()
    }

    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.ncols(), self.mean.len(), "column count mismatch");
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - self.mean[j]);
        centered * &self.loadings
    }

    pub fn reconstruct(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = scores * self.loadings.transpose();
        for mut row in x.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        x
    }
}

pub fn fit_pca(x: &DMatrix<f64>, n_components: usize) -> Result<PcaModel, ClusterError> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(ClusterError::TooFewPoints { n, k: 2 });
    }
    if n_components == 0 || n_components > p {
        return Err(ClusterError::InvalidComponents {
            requested: n_components,
            available: p,
        });
    }
    let mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(ClusterError::DegenerateData("all points identical".into()));
    }
    let rank = values.iter().filter(|&&v| v > RANK_TOL * values[0]).count();
    if rank < n_components {
        log::warn!("PCA: covariance rank {rank} is below the {n_components} requested components");
    }

    let mut loadings = DMatrix::zeros(p, n_components);
    for (c, &src) in order.iter().take(n_components).enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        // sign convention: the largest-magnitude loading is positive
        let lead = v.iter().copied().fold(0.0f64, |acc, w| if w.abs() > acc.abs() { w } else { acc });
        if lead < 0.0 {
            v.neg_mut();
        }
        loadings.set_column(c, &v);
    }

    Ok(PcaModel {
        mean,
        loadings,
        explained_variance_ratios: values.iter().map(|v| v / total).collect(),
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, j| rng.random_range(-1.0..1.0) * (j + 1) as f64)
    }

    #[test]
    fn rank_one_line() {
        let x = DMatrix::from_fn(6, 2, |i, _| i as f64 * 0.7 - 1.0);
        let m = fit_pca(&x, 2).unwrap();
        assert!((m.explained_variance_ratios[0] - 1.0).abs() < 1e-10);
        assert!(m.explained_variance_ratios[1].abs() < 1e-10);
        assert_eq!(m.rank, 1);
        assert!(m.rank_deficient());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.loadings[(0, 0)] - s).abs() < 1e-12);
        assert!((m.loadings[(1, 0)] - s).abs() < 1e-12);
    }

    #[test]
    fn full_rank_reconstruction() {
        let x = random(40, 12, 5);
        let m = fit_pca(&x, 12).unwrap();
        let back = m.reconstruct(&m.project(&x));
        assert!((back - &x).amax() < 1e-8);
        let gram = m.loadings.transpose() * &m.loadings;
        assert!((gram - DMatrix::identity(12, 12)).amax() < 1e-10);
    }

    #[test]
    fn ratios_and_centering() {
        let x = random(30, 5, 9);
        let m = fit_pca(&x, 3).unwrap();
        let r = &m.explained_variance_ratios;
        assert_eq!(r.len(), 5);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(r.windows(2).all(|w| w[0] >= w[1]));
        let scores = m.project(&x);
        for c in scores.column_iter() {
            assert!(c.mean().abs() < 1e-8);
        }
        for c in m.loadings.column_iter() {
            let lead = c.iter().copied().fold(0.0f64, |a, w| if w.abs() > a.abs() { w } else { a });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn rejects_bad_component_count() {
        let x = random(10, 3, 1);
        assert!(matches!(fit_pca(&x, 4), Err(ClusterError::InvalidComponents { .. })));
        assert!(matches!(fit_pca(&x, 0), Err(ClusterError::InvalidComponents { .. })));
    }
}
