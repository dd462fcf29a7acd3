use serde::{Deserialize, Serialize};

use super::{sigmoid, ss_inputs, ModelError, SsParams, SS_INPUTS};
use crate::data::{DriveConfig, ParticipantRecord};

/// Floor on the Bernoulli measurement variance p(1 - p).
pub const MEASUREMENT_VAR_FLOOR: f64 = 1e-6;
/// A take-over is predicted when its probability reaches this value.
pub const TAKEOVER_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfState {
    pub t_hat: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfStep {
    pub trust_prior: f64,
    pub prior_var: f64,
    pub takeover_prob: f64,
    pub takeover_pred: bool,
    pub trust_posterior: f64,
    pub posterior_var: f64,
}

impl EkfState {
    pub fn initial(params: &SsParams) -> Self {
        EkfState {
            t_hat: params.x0_mean,
            p: params.x0_var,
        }
    }

    pub fn predict(&mut self, params: &SsParams, u: &[f64; SS_INPUTS]) {
        let bu: f64 = params.b.iter().zip(u).map(|(b, x)| b * x).sum();
        self.t_hat = params.a * self.t_hat + bu;
        self.p = params.a * params.a * self.p + params.q;
    }

    /// Take-over probability at the current estimate.
    pub fn takeover_prob(&self, params: &SsParams) -> f64 {
        sigmoid(params.c * self.t_hat + params.c_b)
    }

    /// Measurement update with observation `b` in [0, 1]. Returns the
    /// probability used for linearization.
    pub fn update(&mut self, params: &SsParams, b: f64) -> f64 {
        let prob = self.takeover_prob(params);
        let w = prob * (1.0 - prob);
        let h = params.c * w;
        let r = w.max(MEASUREMENT_VAR_FLOOR);
        let s = h * h * self.p + r;
        let k = self.p * h / s;
        self.t_hat += k * (b - prob);
        // (1 - K H) P, written so it stays non-negative
        self.p = self.p * r / s;
        prob
    }
}

/// Runs the filter over a drive. The first intersection starts from the
/// initial distribution; later ones apply the state transition with the
/// intersection's inputs. Each step predicts the take-over, then updates on
/// the observed one.
pub fn ekf_run(
    params: &SsParams,
    inputs: &[[f64; SS_INPUTS]],
    takeovers: &[bool],
) -> Result<Vec<EkfStep>, ModelError> {
    if inputs.len() != takeovers.len() {
        return Err(ModelError::LengthMismatch(format!(
            "{} input rows, {} take-over observations",
            inputs.len(),
            takeovers.len()
        )));
    }
    let mut state = EkfState::initial(params);
    let mut steps = Vec::with_capacity(inputs.len());
    for (k, (u, &b)) in inputs.iter().zip(takeovers).enumerate() {
        if k > 0 {
            state.predict(params, u);
        }
        let (trust_prior, prior_var) = (state.t_hat, state.p);
        let prob = state.update(params, if b { 1.0 } else { 0.0 });
        if !(state.t_hat.is_finite() && state.p.is_finite() && prob.is_finite()) {
            return Err(ModelError::NonFiniteState(k + 1));
        }
        steps.push(EkfStep {
            trust_prior,
            prior_var,
            takeover_prob: prob,
            takeover_pred: prob >= TAKEOVER_THRESHOLD,
            trust_posterior: state.t_hat,
            posterior_var: state.p,
        });
    }
    Ok(steps)
}

pub fn ekf_run_record(
    params: &SsParams,
    record: &ParticipantRecord,
    drive: &DriveConfig,
) -> Result<Vec<EkfStep>, ModelError> {
    let inputs: Vec<[f64; SS_INPUTS]> = record
        .events
        .iter()
        .map(|e| ss_inputs(drive, e.intersection_index))
        .collect();
    ekf_run(params, &inputs, &record.takeovers())
}
