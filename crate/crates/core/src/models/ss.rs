//! Fitting the state-space trust model
//!
//! ```text
//! T_k = A T_{k-1} + B [v, t, p, f, 1]_k + w_k,   w_k ~ N(0, Q)
//! b_k ~ Bernoulli(Sig(C T_k + C_b))
//! ```
//!
//! with T_k the standardized trust reported at intersection k. The state
//! equation is a linear mixed model with a random intercept per participant,
//! estimated by maximizing the profile likelihood of the variance ratio
//! (random-effects GLS). The output equation is a logistic regression of
//! take-over on reported trust.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::logistic::fit_logistic;
use super::lr::solve_normal;
use super::{ss_inputs, ModelError, TrustScaler, SS_INPUTS};
use crate::data::{Catalog, ParticipantRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsParams {
    pub a: f64,
    /// Weights of `[v, t, p, f, 1]`.
    pub b: [f64; SS_INPUTS],
    pub c: f64,
    pub c_b: f64,
    pub q: f64,
    pub x0_mean: f64,
    pub x0_var: f64,
}

impl SsParams {
    /// Re-expresses parameters for the trust scale `raw = scaler(z)`, i.e.
    /// from z-units to raw units.
    pub fn to_raw(&self, s: &TrustScaler) -> SsParams {
        let mut b = self.b.map(|v| v * s.sd);
        b[SS_INPUTS - 1] += (1.0 - self.a) * s.mean;
        SsParams {
            a: self.a,
            b,
            c: self.c / s.sd,
            c_b: self.c_b - self.c * s.mean / s.sd,
            q: self.q * s.sd * s.sd,
            x0_mean: s.destandardize(self.x0_mean),
            x0_var: self.x0_var * s.sd * s.sd,
        }
    }

    /// Inverse of [`SsParams::to_raw`].
    pub fn to_z(&self, s: &TrustScaler) -> SsParams {
        let mut b = self.b;
        b[SS_INPUTS - 1] -= (1.0 - self.a) * s.mean;
        SsParams {
            a: self.a,
            b: b.map(|v| v / s.sd),
            c: self.c * s.sd,
            c_b: self.c_b + self.c * s.mean,
            q: self.q / (s.sd * s.sd),
            x0_mean: s.standardize(self.x0_mean),
            x0_var: self.x0_var / (s.sd * s.sd),
        }
    }

    pub fn is_valid(&self) -> bool {
        let finite = [self.a, self.c, self.c_b, self.q, self.x0_mean, self.x0_var]
            .iter()
            .chain(&self.b)
            .all(|v| v.is_finite());
        finite && self.q >= 0.0 && self.x0_var > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsFitOptions {
    /// Carry a constant input in the state equation.
    pub state_offset: bool,
}

impl Default for SsFitOptions {
    fn default() -> Self {
        SsFitOptions { state_offset: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsDiagnostics {
    /// Estimated random-intercept variance over residual variance.
    pub random_intercept_ratio: f64,
    pub transitions: usize,
    pub logistic_iterations: usize,
    pub separable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsModel {
    /// In z-units of `scaler`.
    pub params: SsParams,
    pub scaler: TrustScaler,
    pub diagnostics: SsDiagnostics,
}

/// Upper bound of the GLS shrinkage factor searched. At 1 the transform is
/// full within-participant demeaning, which removes the intercept.
const MAX_THETA: f64 = 0.99;

/// Per-participant cross products of the regressors (intercept first when
/// the state carries an offset) and the target.
struct Moments {
    t: f64,
    sum_x: DVector<f64>,
    sum_y: f64,
    sxx: DMatrix<f64>,
    sxy: DVector<f64>,
    syy: f64,
}

struct Panel {
    /// Rows per participant: `[T_{k-1}, v, t, p, f, 1]`.
    groups: Vec<(Vec<[f64; 6]>, Vec<f64>)>,
    moments: Vec<Moments>,
    n_obs: usize,
}

impl Panel {
    fn new(groups: Vec<(Vec<[f64; 6]>, Vec<f64>)>, state_offset: bool) -> Self {
        let order: &[usize] = if state_offset {
            &[5, 0, 1, 2, 3, 4]
        } else {
            &[0, 1, 2, 3, 4]
        };
        let p = order.len();
        let moments = groups
            .iter()
            .map(|(rows, targets)| {
                let mut m = Moments {
                    t: rows.len() as f64,
                    sum_x: DVector::zeros(p),
                    sum_y: 0.0,
                    sxx: DMatrix::zeros(p, p),
                    sxy: DVector::zeros(p),
                    syy: 0.0,
                };
                for (r, &y) in rows.iter().zip(targets) {
                    let x = DVector::from_iterator(p, order.iter().map(|&j| r[j]));
                    m.sum_x += &x;
                    m.sum_y += y;
                    m.sxx += &x * x.transpose();
                    m.sxy += &x * y;
                    m.syy += y * y;
                }
                m
            })
            .collect();
        let n_obs = groups.iter().map(|g| g.0.len()).sum();
        Panel {
            groups,
            moments,
            n_obs,
        }
    }

    /// Regression on quasi-demeaned data `x - θ x̄` for variance ratio
    /// `lambda`, from the group moments. Returns the coefficients and the
    /// transformed residual sum of squares.
    fn gls(&self, lambda: f64) -> Result<(DVector<f64>, f64), ModelError> {
        let p = self.moments[0].sum_x.len();
        let mut xtx = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);
        let mut yty = 0.0;
        for m in &self.moments {
            let theta = 1.0 - 1.0 / (1.0 + m.t * lambda).sqrt();
            let c = (2.0 * theta - theta * theta) / m.t;
            xtx += &m.sxx - &m.sum_x * m.sum_x.transpose() * c;
            xty += &m.sxy - &m.sum_x * (m.sum_y * c);
            yty += m.syy - c * m.sum_y * m.sum_y;
        }
        let fit = solve_normal(xtx.clone(), xty.clone(), true)?;
        let b = &fit.coefficients;
        let ssr = yty - 2.0 * b.dot(&xty) + b.dot(&(&xtx * b));
        Ok((fit.coefficients, ssr.max(0.0)))
    }

    fn profile_loglik(&self, lambda: f64) -> Result<f64, ModelError> {
        let (_, ssr) = self.gls(lambda)?;
        let n = self.n_obs as f64;
        let logdet: f64 = self.moments.iter().map(|m| (1.0 + m.t * lambda).ln()).sum();
        Ok(-0.5 * n * (ssr / n).max(f64::MIN_POSITIVE).ln() - 0.5 * logdet)
    }
}

fn lambda_for_theta(theta: f64, t: f64) -> f64 {
    let r = 1.0 / (1.0 - theta);
    (r * r - 1.0) / t
}

/// Maximizes the profile likelihood over the shrinkage factor: a coarse grid
/// followed by golden-section refinement around the best grid point.
fn estimate_variance_ratio(panel: &Panel) -> Result<f64, ModelError> {
    let t_typ = panel.n_obs as f64 / panel.groups.len() as f64;
    let f = |theta: f64| panel.profile_loglik(lambda_for_theta(theta, t_typ));
    const GRID: usize = 50;
    let mut best = (0.0, f(0.0)?);
    for i in 1..=GRID {
        let th = MAX_THETA * i as f64 / GRID as f64;
        let v = f(th)?;
        if v > best.1 {
            best = (th, v);
        }
    }
    let step = MAX_THETA / GRID as f64;
    let (mut lo, mut hi) = ((best.0 - step).max(0.0), (best.0 + step).min(MAX_THETA));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..40 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1)? >= f(m2)? {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mid = 0.5 * (lo + hi);
    let theta = if f(mid)? >= best.1 { mid } else { best.0 };
    Ok(lambda_for_theta(theta, t_typ))
}

/// Fits the state and output equations on standardized trust.
pub fn fit_ss(
    records: &[&ParticipantRecord],
    catalog: &Catalog,
    opts: &SsFitOptions,
) -> Result<SsModel, ModelError> {
    if records.len() < 2 {
        return Err(ModelError::InsufficientData(format!(
            "{} participants, need at least 2",
            records.len()
        )));
    }
    let scaler = TrustScaler::fit(records.iter().copied());

    let mut groups = Vec::with_capacity(records.len());
    let mut n_obs = 0;
    let mut initial = Vec::with_capacity(records.len());
    let mut out_x = Vec::new();
    let mut out_y = Vec::new();
    for r in records {
        let drive = catalog.get(r.drive_type);
        let z: Vec<f64> = r.trust().iter().map(|&t| scaler.standardize(t)).collect();
        initial.push(z[0]);
        let mut rows = Vec::with_capacity(z.len() - 1);
        let mut targets = Vec::with_capacity(z.len() - 1);
        for k in 1..z.len() {
            let u = ss_inputs(drive, k + 1);
            rows.push([z[k - 1], u[0], u[1], u[2], u[3], u[4]]);
            targets.push(z[k]);
        }
        n_obs += rows.len();
        groups.push((rows, targets));
        out_x.extend(z.iter().copied());
        out_y.extend(r.takeovers());
    }
    if n_obs < 20 {
        return Err(ModelError::InsufficientData(format!(
            "{n_obs} transitions, need at least 20"
        )));
    }
    let panel = Panel::new(groups, opts.state_offset);

    let lambda = estimate_variance_ratio(&panel)?;
    let (beta, _) = panel.gls(lambda)?;
    let (a, b) = if opts.state_offset {
        (beta[1], [beta[2], beta[3], beta[4], beta[5], beta[0]])
    } else {
        (beta[0], [beta[1], beta[2], beta[3], beta[4], 0.0])
    };

    let mut ss = 0.0;
    for (rows, targets) in &panel.groups {
        for (r, &y) in rows.iter().zip(targets) {
            let pred = a * r[0] + b[0] * r[1] + b[1] * r[2] + b[2] * r[3] + b[3] * r[4] + b[4] * r[5];
            ss += (y - pred) * (y - pred);
        }
    }
    let q = ss / n_obs as f64;

    let out = fit_logistic(&out_x, &out_y)?;

    let n0 = initial.len() as f64;
    let x0_mean = initial.iter().sum::<f64>() / n0;
    let x0_var = (initial.iter().map(|v| (v - x0_mean) * (v - x0_mean)).sum::<f64>()
        / (n0 - 1.0))
        .max(1e-6);

    Ok(SsModel {
        params: SsParams {
            a,
            b,
            c: out.slope,
            c_b: out.intercept,
            q,
            x0_mean,
            x0_var,
        },
        scaler,
        diagnostics: SsDiagnostics {
            random_intercept_ratio: lambda,
            transitions: n_obs,
            logistic_iterations: out.iterations,
            separable: out.separable,
        },
    })
}
