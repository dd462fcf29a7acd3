//! One-regressor logistic regression by iteratively reweighted least
//! squares (Newton's method) with step halving.

use super::{sigmoid, ModelError};

pub const MAX_ITERS: usize = 100;
pub const LOGLIK_TOL: f64 = 1e-8;
/// Bound on |coefficient| when the classes are separable.
pub const COEF_CAP: f64 = 20.0;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub slope: f64,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Labels are perfectly separated (or all equal); coefficients capped.
    pub separable: bool,
    /// Log-likelihood after every accepted step, starting at (0, 0).
    pub loglik_history: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn loglik(x: &[f64], y: &[bool], slope: f64, intercept: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let eta = slope * xi + intercept;
            if yi {
                -softplus(-eta)
            } else {
                -softplus(eta)
            }
        })
        .sum()
}

fn is_separable(x: &[f64], y: &[bool]) -> bool {
    let pos = x.iter().zip(y).filter(|(_, &b)| b).map(|(v, _)| *v);
    let neg = x.iter().zip(y).filter(|(_, &b)| !b).map(|(v, _)| *v);
    let (pmin, pmax) = pos.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (nmin, nmax) = neg.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !pmin.is_finite() || !nmin.is_finite() {
        return true;
    }
    pmin > nmax || nmin > pmax
}

/// Fits `P(y = 1 | x) = Sig(slope * x + intercept)`.
pub fn fit_logistic(x: &[f64], y: &[bool]) -> Result<LogisticFit, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch(format!(
            "{} regressors, {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(ModelError::InsufficientData("no logistic samples".into()));
    }
    let separable = is_separable(x, y);
    let clamp = |v: f64| if separable { v.clamp(-COEF_CAP, COEF_CAP) } else { v };

    let (mut b1, mut b0) = (0.0, 0.0);
    let mut ll = loglik(x, y, b1, b0);
    let mut history = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERS {
        iterations += 1;
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(y) {
            let p = sigmoid(b1 * xi + b0);
            let r = if yi { 1.0 } else { 0.0 } - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        let det = h00 * h11 - h01 * h01;
        let newton = if det > 1e-12 * (h00 * h11).max(f64::MIN_POSITIVE) {
            Some(((h11 * g0 - h01 * g1) / det, (h00 * g1 - h01 * g0) / det))
        } else {
            None
        };

        let mut accepted = None;
        let directions = newton.into_iter().chain(std::iter::once((g0, g1)));
        'dirs: for (d0, d1) in directions {
            let mut step = 1.0;
            for _ in 0..MAX_HALVINGS {
                let (c0, c1) = (clamp(b0 + step * d0), clamp(b1 + step * d1));
                let cand = loglik(x, y, c1, c0);
                if cand >= ll {
                    accepted = Some((c0, c1, cand));
                    break 'dirs;
                }
                step *= 0.5;
            }
        }
        let Some((c0, c1, cand)) = accepted else {
            let gnorm = (g0 * g0 + g1 * g1).sqrt();
            if gnorm < 1e-6 * x.len() as f64 || separable {
                converged = true;
                break;
            }
            return Err(ModelError::IrlsDiverged(iterations));
        };
        let change = cand - ll;
        b0 = c0;
        b1 = c1;
        ll = cand;
        history.push(ll);
        if change.abs() < LOGLIK_TOL {
            converged = true;
            break;
        }
    }
    if separable {
        log::warn!("logistic fit: separable labels, coefficients capped at {COEF_CAP}");
    } else if !converged {
        log::warn!("logistic fit: no convergence within {MAX_ITERS} iterations");
    }
    Ok(LogisticFit {
        slope: b1,
        intercept: b0,
        iterations,
        converged,
        separable,
        loglik_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(n: usize, slope: f64, intercept: f64, seed: u64) -> (Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = x
            .iter()
            .map(|&v| rng.random::<f64>() < sigmoid(slope * v + intercept))
            .collect();
        (x, y)
    }

    #[test]
    fn recovers_coefficients() {
        let (x, y) = sample(20_000, -1.5, 0.4, 1);
        let f = fit_logistic(&x, &y).unwrap();
        assert!(f.converged && !f.separable);
        assert!((f.slope + 1.5).abs() < 0.08, "{f:?}");
        assert!((f.intercept - 0.4).abs() < 0.05, "{f:?}");
    }

    #[test]
    fn score_equations_hold_at_optimum() {
        let (x, y) = sample(500, 0.8, -0.3, 2);
        let f = fit_logistic(&x, &y).unwrap();
        let (mut g0, mut g1) = (0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(&y) {
            let r = if yi { 1.0 } else { 0.0 } - sigmoid(f.slope * xi + f.intercept);
            g0 += r;
            g1 += r * xi;
        }
        assert!(g0.abs() < 1e-4 && g1.abs() < 1e-4);
    }

    #[test]
    fn loglik_non_decreasing() {
        for seed in 0..20 {
            let (x, y) = sample(200, 3.0, 1.0, seed);
            let f = fit_logistic(&x, &y).unwrap();
            assert!(f.loglik_history.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn all_negative_labels_are_capped() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 10.0 - 2.5).collect();
        let f = fit_logistic(&x, &[false; 50]).unwrap();
        assert!(f.separable);
        assert!(f.slope.abs() <= COEF_CAP && f.intercept.abs() <= COEF_CAP);
        assert!(sigmoid(f.slope * 0.0 + f.intercept) < 1e-3);
    }

    #[test]
    fn perfectly_separated_labels_are_capped() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 10.0 - 2.0).collect();
        let y: Vec<bool> = x.iter().map(|&v| v > 0.05).collect();
        let f = fit_logistic(&x, &y).unwrap();
        assert!(f.separable);
        assert!(f.slope > 0.0 && f.slope <= COEF_CAP);
    }
}
