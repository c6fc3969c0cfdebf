//! Experiment harness: trains proposals, sweeps estimators over sample
//! sizes and writes relative-error tables and plot data.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod report;
pub mod setup;

use amci::models::ModelError;
use amci::proposals::ProposalError;
use amci::training::TrainingError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("no {role} checkpoint at {path}; create it with `amci train --config <CONFIG> --role {role} --checkpoint {path}`")]
    MissingCheckpoint { role: &'static str, path: PathBuf },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Proposal(#[from] ProposalError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl BenchError {
    /// 2 for anything the user can fix in the invocation, 3 for numerical
    /// failures during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Io(_) | BenchError::MissingCheckpoint { .. } => 2,
            BenchError::Training(TrainingError::Config(_)) => 2,
            _ => 3,
        }
    }
}
