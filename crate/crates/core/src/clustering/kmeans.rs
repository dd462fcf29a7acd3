//! Lloyd's k-means with k-means++ seeding, silhouette scores and the
//! adjusted Rand index.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::data::Archetype;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub seed: u64,
    pub n_restarts: usize,
    pub max_iters: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            seed: 0,
            n_restarts: 10,
            max_iters: 300,
        }
    }
}

impl KMeansOptions {
    pub fn with_seed(seed: u64) -> Self {
        KMeansOptions {
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    /// k x m, rows sorted lexicographically.
    pub centroids: DMatrix<f64>,
    /// Cluster index per input point.
    pub labels: Vec<usize>,
    pub wcss: f64,
    /// Mean silhouette; `None` for a single cluster.
    pub silhouette: Option<f64>,
    /// Cluster names, set by [`super::name_clusters`] for k = 2.
    pub names: Option<Vec<Archetype>>,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// Index of the nearest centroid (lowest index on ties).
    pub fn assign(&self, point: &[f64]) -> usize {
        nearest(&self.centroids, point).0
    }

    pub fn name_of(&self, cluster: usize) -> Option<Archetype> {
        self.names.as_ref().map(|n| n[cluster])
    }
}

fn sq_dist(a: &[f64], b: impl Iterator<Item = f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

fn nearest(centroids: &DMatrix<f64>, p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.nrows() {
        let d = sq_dist(p, centroids.row(c).iter().copied());
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.len();
    let m = points[0].len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, points[chosen[0]].iter().copied()))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            // guard against rounding landing on an already-chosen point
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points[next].iter().copied()));
        }
    }
    DMatrix::from_fn(k, m, |c, j| points[chosen[c]][j])
}

fn wcss(points: &[Vec<f64>], centroids: &DMatrix<f64>, labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, centroids.row(l).iter().copied()))
        .sum()
}

fn update_centroids(points: &[Vec<f64>], labels: &[usize], k: usize) -> DMatrix<f64> {
    let m = points[0].len();
    let mut sums = DMatrix::zeros(k, m);
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for j in 0..m {
            sums[(l, j)] += p[j];
        }
    }
    for c in 0..k {
        for j in 0..m {
            sums[(c, j)] /= counts[c] as f64;
        }
    }
    sums
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centroids: &DMatrix<f64>, k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (i, sq_dist(&points[i], centroids.row(labels[i]).iter().copied())))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
            .expect("k <= n guarantees a cluster with two or more points");
        labels[far] = empty;
    }
}

/// One Lloyd run from a seeded initialization. Returns the final labels and
/// centroids plus the WCSS after every centroid update.
pub(crate) fn lloyd(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, DMatrix<f64>, Vec<f64>) {
    let mut centroids = plus_plus_init(points, k, rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(&centroids, p).0).collect();
    let mut history = Vec::new();
    repair_empty(points, &mut labels, &centroids, k);
    for _ in 0..max_iters.max(1) {
        centroids = update_centroids(points, &labels, k);
        history.push(wcss(points, &centroids, &labels));
        let mut next: Vec<usize> = points.iter().map(|p| nearest(&centroids, p).0).collect();
        repair_empty(points, &mut next, &centroids, k);
        if next == labels {
            break;
        }
        labels = next;
    }
    (labels, centroids, history)
}

/// Sorts centroid rows lexicographically and relabels points to match.
fn canonicalize(labels: &mut [usize], centroids: &DMatrix<f64>) -> DMatrix<f64> {
    let k = centroids.nrows();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        centroids
            .row(a)
            .iter()
            .zip(centroids.row(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    for l in labels.iter_mut() {
        *l = rank[*l];
    }
    centroids.select_rows(&order)
}

/// Best-of-restarts k-means. Restart `r` draws from its own ChaCha stream
/// `(seed, r)`.
pub fn kmeans(
    points: &DMatrix<f64>,
    k: usize,
    opts: &KMeansOptions,
) -> Result<ClusterModel, ClusterError> {
    let n = points.nrows();
    if k == 0 {
        return Err(ClusterError::InvalidK(k));
    }
    if n == 0 || k > n {
        return Err(ClusterError::TooFewPoints { n, k });
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| row(points, i)).collect();
    let mut best: Option<(f64, Vec<usize>, DMatrix<f64>)> = None;
    for r in 0..opts.n_restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64);
        let (labels, centroids, _) = lloyd(&rows, k, opts.max_iters, &mut rng);
        let w = wcss(&rows, &centroids, &labels);
        if best.as_ref().is_none_or(|(bw, _, _)| w < *bw) {
            best = Some((w, labels, centroids));
        }
    }
    let (w, mut labels, centroids) = best.expect("at least one restart");
    let centroids = canonicalize(&mut labels, &centroids);
    let silhouette = if k >= 2 {
        Some(silhouette(points, &labels)?)
    } else {
        None
    };
    Ok(ClusterModel {
        k,
        centroids,
        labels,
        wcss: w,
        silhouette,
        names: None,
    })
}

/// Mean silhouette coefficient with Euclidean distance. Points in singleton
/// clusters score 0, as do points whose `a` and `b` are both 0.
pub fn silhouette(points: &DMatrix<f64>, labels: &[usize]) -> Result<f64, ClusterError> {
    let n = points.nrows();
    assert_eq!(n, labels.len(), "label count mismatch");
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| row(points, i)).collect();
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += sq_dist(&rows[i], rows[j].iter().copied()).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "label count mismatch");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|r| r[j]).sum()))
        .sum();
    let expected = rows * cols / choose2(n);
    let max = 0.5 * (rows + cols);
    if max == expected {
        // both partitions trivial (all-in-one or all singletons)
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn pts(v: &[(f64, f64)]) -> DMatrix<f64> {
        DMatrix::from_fn(v.len(), 2, |i, j| if j == 0 { v[i].0 } else { v[i].1 })
    }

    #[test]
    fn separated_pairs() {
        let x = pts(&[(0.0, 0.0), (0.0, 1.0), (10.0, 0.0), (10.0, 1.0)]);
        let m = kmeans(&x, 2, &KMeansOptions::default()).unwrap();
        assert_eq!(m.labels, vec![0, 0, 1, 1]);
        assert!((m.wcss - 1.0).abs() < 1e-12);
        assert_eq!(m.centroids.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.5]);
    }

    #[test]
    fn k_equals_n() {
        let x = pts(&[(0.0, 0.0), (1.0, 3.0), (-2.0, 5.0), (4.0, 4.0), (2.0, -1.0)]);
        let m = kmeans(&x, 5, &KMeansOptions::with_seed(3)).unwrap();
        assert_eq!(m.wcss, 0.0);
        let mut l = m.labels.clone();
        l.sort();
        assert_eq!(l, vec![0, 1, 2, 3, 4]);
        assert_eq!(m.silhouette, Some(0.0));
    }

    #[test]
    fn too_few_points() {
        let x = pts(&[(0.0, 0.0)]);
        assert!(matches!(
            kmeans(&x, 2, &KMeansOptions::default()),
            Err(ClusterError::TooFewPoints { n: 1, k: 2 })
        ));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let x = pts(&[(1.0, 1.0); 6]);
        let m = kmeans(&x, 3, &KMeansOptions::default()).unwrap();
        assert!(m.sizes().iter().all(|&s| s > 0));
        assert_eq!(m.wcss, 0.0);
        assert_eq!(m.silhouette, Some(0.0));
    }

    #[test]
    fn silhouette_hand_computed() {
        let x = pts(&[(0.0, 0.0), (0.0, 1.0), (4.0, 0.0), (4.0, 1.0)]);
        let s = silhouette(&x, &[0, 0, 1, 1]).unwrap();
        // each point: a = 1, b = (4 + sqrt(17)) / 2
        let b = (4.0 + 17f64.sqrt()) / 2.0;
        assert!((s - (b - 1.0) / b).abs() < 1e-15);
    }

    #[test]
    fn silhouette_edge_cases() {
        let same = pts(&[(2.0, 2.0); 4]);
        assert_eq!(silhouette(&same, &[0, 0, 1, 1]).unwrap(), 0.0);
        assert!(matches!(
            silhouette(&same, &[1, 1, 1, 1]),
            Err(ClusterError::SingleCluster)
        ));
        let blobs = pts(&[(0.0, 0.0), (0.1, 0.0), (0.0, 0.1), (50.0, 50.0), (50.1, 50.0), (50.0, 50.1)]);
        assert!(silhouette(&blobs, &[0, 0, 0, 1, 1, 1]).unwrap() > 0.9);
    }

    #[test]
    fn wcss_monotone_within_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..60)
                .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let (_, _, hist) = lloyd(&rows, 4, 300, &mut rng);
            assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{hist:?}");
        }
    }

    #[test]
    fn ari_basics() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
        // sklearn: adjusted_rand_score([0,0,0,1,1,1],[0,0,1,1,2,2]) = 0.24242424...
        let v = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]);
        assert!((v - 8.0 / 33.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn permutation_keeps_partition(seed in 0u64..50, shift in 1usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let centers = [(0.0, 0.0), (20.0, 0.0), (0.0, 20.0)];
            let v: Vec<(f64, f64)> = (0..30)
                .map(|i| {
                    let c = centers[i % 3];
                    (c.0 + rng.random_range(-1.0..1.0), c.1 + rng.random_range(-1.0..1.0))
                })
                .collect();
            let rotated: Vec<(f64, f64)> = v.iter().cycle().skip(shift).take(v.len()).copied().collect();
            let a = kmeans(&pts(&v), 3, &KMeansOptions::with_seed(seed)).unwrap();
            let b = kmeans(&pts(&rotated), 3, &KMeansOptions::with_seed(seed)).unwrap();
            for i in 0..v.len() {
                prop_assert_eq!(a.labels[(i + shift) % v.len()], b.labels[i]);
            }
        }
    }
}
