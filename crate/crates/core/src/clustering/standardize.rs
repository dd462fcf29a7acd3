use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ClusterError;

/// Per-column mean and sample standard deviation (n - 1 denominator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

pub fn fit_standardizer(x: &DMatrix<f64>) -> Result<StandardizationParams, ClusterError> {
    let n = x.nrows();
    if n < 2 {
        return Err(ClusterError::TooFewPoints { n, k: 2 });
    }
    let mut mean = Vec::with_capacity(x.ncols());
    let mut sd = Vec::with_capacity(x.ncols());
    for (j, col) in x.column_iter().enumerate() {
        let m = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
        let s = var.sqrt();
        if s == 0.0 || !s.is_finite() {
            return Err(ClusterError::ConstantFeature(j));
        }
        mean.push(m);
        sd.push(s);
    }
    Ok(StandardizationParams { mean, sd })
}

pub fn apply_standardizer(params: &StandardizationParams, x: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(x.ncols(), params.mean.len(), "column count mismatch");
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        (x[(i, j)] - params.mean[j]) / params.sd[j]
    })
}
