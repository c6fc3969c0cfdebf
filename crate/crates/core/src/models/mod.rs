//! Benchmark models: the Gaussian tail integral and the tumor-treatment
//! ODE model, with their ground-truth oracles.

mod cancer;
pub mod ode;
mod tail;

pub use cancer::{cancer_loss, CancerModel};
pub use ode::{OdeError, TumorOde};
pub use tail::{HalfNormalDataProposal, OracleProposals, TailModel};

use crate::prob::{ProbError, RngStream};
use crate::quadrature::QuadratureError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("{0} is not supported for this model")]
    Unsupported(&'static str),
    #[error("ground-truth oracle failed: {0}")]
    Oracle(String),
    #[error("expected {what} of length {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
}

/// One draw from `p(x, y)` with the target evaluated at the supplied θ.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f: f64,
}

/// `log p(x, y)` and `f(x; θ)` computed together.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub log_joint: f64,
    pub f: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruthMethod {
    Analytic,
    Quadrature,
    /// Importance sampling against the normalized posterior.
    IsOracle,
    /// Self-normalized importance sampling with the prior as proposal.
    SnisOracle,
}

impl TruthMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TruthMethod::Analytic => "analytic",
            TruthMethod::Quadrature => "quadrature",
            TruthMethod::IsOracle => "is-oracle",
            TruthMethod::SnisOracle => "snis-oracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub value: f64,
    /// Zero for analytic values.
    pub std_error: f64,
    pub method: TruthMethod,
    pub samples: u64,
    /// `E_{p(x|y)} |f - mu|`, when the oracle can supply it.
    pub abs_dev: Option<f64>,
}

/// A generative model `p(x) p(y|x)` with target `f(x; θ)` and
/// pseudo-prior `p(θ)`.
pub trait Model: Send + Sync {
    fn name(&self) -> &'static str;
    fn x_dim(&self) -> usize;
    fn y_dim(&self) -> usize;
    /// Zero when the target has no parameters.
    fn theta_dim(&self) -> usize;

    fn sample_theta(&self, rng: &mut RngStream) -> Vec<f64>;
    fn log_theta_prior(&self, theta: &[f64]) -> f64;

    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64>;
    fn log_prior(&self, x: &[f64]) -> f64;

    fn sample_observation(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, ModelError>;

    fn sample_joint(&self, theta: &[f64], rng: &mut RngStream) -> Result<JointSample, ModelError>;

    /// Shares simulator work between the likelihood and the target.
    fn evaluate(&self, x: &[f64], y: &[f64], theta: &[f64]) -> Result<Evaluation, ModelError>;

    fn target(&self, x: &[f64], theta: &[f64]) -> Result<f64, ModelError>;

    fn log_joint(&self, x: &[f64], y: &[f64]) -> Result<f64, ModelError> {
        let theta = vec![0.0; self.theta_dim()];
        Ok(self.evaluate(x, y, &theta)?.log_joint)
    }
}

/// Joint proposal `q'(θ, x)` for importance-sampled training data.
pub trait DataProposal: Send + Sync {
    /// Draws `(θ, x)` and returns `log q'(θ, x)`.
    fn sample(&self, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>, f64);
}
