//! Trust prediction models.
//!
//! * [`LrModel`]: linear regression of current trust on the inputs, trust
//!   and take-over of the previous two intersections.
//! * [`SsModel`]: scalar linear state-space model of trust with a logistic
//!   take-over output, run online by an extended Kalman filter
//!   ([`ekf_run`]) that never sees self-reported trust.
//!
//! Both work on trust standardized with training-split statistics
//! ([`TrustScaler`]).

mod ekf;
mod logistic;
mod lr;
mod ss;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ekf::{ekf_run, ekf_run_record, EkfState, EkfStep, MEASUREMENT_VAR_FLOOR, TAKEOVER_THRESHOLD};
pub use logistic::{fit_logistic, LogisticFit, COEF_CAP};
pub use lr::{
    fit_lr, least_squares, lr_design, predict_lr, solve_normal, LeastSquares, LrModel, LrPrediction,
    LR_REGRESSORS, LR_RIDGE,
};
pub use ss::{fit_ss, SsDiagnostics, SsFitOptions, SsModel, SsParams};

use crate::data::{DriveConfig, Level, ParticipantRecord};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("logistic fit diverged after {0} iterations")]
    IrlsDiverged(usize),
    #[error("non-finite filter state at intersection {0}")]
    NonFiniteState(usize),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("cannot parse model file: {0}")]
    Parse(String),
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Mean and sample standard deviation of raw (0–100) trust.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustScaler {
    pub mean: f64,
    pub sd: f64,
}

impl TrustScaler {
    /// Fits on every report of every record. A zero spread falls back to
    /// sd = 1 so constant trust maps to 0.
    pub fn fit<'a>(records: impl IntoIterator<Item = &'a ParticipantRecord>) -> Self {
        let values: Vec<f64> = records
            .into_iter()
            .flat_map(|r| r.events.iter().map(|e| e.trust_report))
            .collect();
        let n = values.len() as f64;
        if values.len() < 2 {
            return TrustScaler {
                mean: values.first().copied().unwrap_or(0.0),
                sd: 1.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        TrustScaler {
            mean,
            sd: if sd > 0.0 { sd } else { 1.0 },
        }
    }

    pub fn standardize(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.sd
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// Observed quantities at one intersection, binary fields encoded as
/// High / present = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagInputs {
    pub visibility: f64,
    pub transparency: f64,
    pub pedestrian: f64,
    pub reliability: f64,
    pub trust_std: f64,
    pub takeover: f64,
}

impl LagInputs {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.visibility,
            self.transparency,
            self.pedestrian,
            self.reliability,
            self.trust_std,
            self.takeover,
        ]
    }
}

pub fn lag_inputs(
    record: &ParticipantRecord,
    drive: &DriveConfig,
    scaler: &TrustScaler,
) -> Vec<LagInputs> {
    record
        .events
        .iter()
        .map(|e| {
            let ic = drive.intersection(e.intersection_index);
            LagInputs {
                visibility: drive.visibility.indicator(),
                transparency: drive.transparency.indicator(),
                pedestrian: if ic.pedestrian { 1.0 } else { 0.0 },
                reliability: if ic.reliability == Level::High { 1.0 } else { 0.0 },
                trust_std: scaler.standardize(e.trust_report),
                takeover: if e.takeover { 1.0 } else { 0.0 },
            }
        })
        .collect()
}

/// Length of the state-space input vector `[v, t, p, f, 1]`.
pub const SS_INPUTS: usize = 5;

/// State-space inputs of the 1-based intersection `index`.
pub fn ss_inputs(drive: &DriveConfig, index: usize) -> [f64; SS_INPUTS] {
    let ic = drive.intersection(index);
    [
        drive.visibility.indicator(),
        drive.transparency.indicator(),
        if ic.pedestrian { 1.0 } else { 0.0 },
        ic.reliability.indicator(),
        1.0,
    ]
}
