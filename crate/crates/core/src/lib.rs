//! Trust-dynamics clustering of drivers and cluster-customized trust and
//! take-over models.

pub mod clustering;
pub mod data;
pub mod evaluation;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod synth;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error(transparent)]
    Feature(#[from] features::FeatureError),
    #[error(transparent)]
    Cluster(#[from] clustering::ClusterError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn model_exit_code(e: &models::ModelError) -> i32 {
    match e {
        models::ModelError::IrlsDiverged(_) | models::ModelError::NonFiniteState(_) => 3,
        _ => 1,
    }
}

fn data_exit_code(e: &data::DataError) -> i32 {
    match e {
        data::DataError::Io(_) => 2,
        data::DataError::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => 2,
        _ => 1,
    }
}

impl Error {
    /// 1 for invalid input or domain errors, 2 for I/O failures, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Data(e) | Error::Synth(synth::SynthError::Data(e)) => data_exit_code(e),
            Error::Model(e) => model_exit_code(e),
            Error::Eval(evaluation::EvalError::Model(e))
            | Error::Eval(evaluation::EvalError::Participant { source: e, .. }) => model_exit_code(e),
            _ => 1,
        }
    }
}
