//! Amortized training of conditional proposals.
//!
//! Every objective reduces to a weighted negative log-likelihood
//! `mean_i w_i · (−log q(x_i; cond_i))` over examples generated from the
//! model. The objectives differ only in how `(x, cond, w)` are produced:
//!
//! - `Q2Standard`: `(x, y) ~ p(x, y)`, `w = 1`, `cond = y`.
//! - `Q1FixedF`: `(x, y) ~ p(x, y)` with a fixed θ, `w = f(x; θ) / λ`, `cond = y`.
//! - `Q1ParamF`: additionally `θ ~ p(θ)`, `cond = (y, θ)`.
//! - `Q1ImportanceSampled`: `(θ, x) ~ q'(θ, x)`, `y ~ p(y | x)` and
//!   `w = p(θ) p(x) f(x; θ) / (q'(θ, x) λ)`.
//!
//! Importance weights are normalized by a shift fixed at the start of a run,
//! so losses stay comparable across dataset refreshes.

mod loss;
mod regime;

pub use loss::{batch_loss, loss_q1, loss_q1_is, loss_q2, BatchLoss, Example, IsSample, JointDraw};
pub use regime::{
    write_trace_csv, RefreshCounter, RefreshDecision, RefreshRegime, TraceRow, TrainConfig, TrainingReport, TrainingRun,
};

use crate::models::{DataProposal, Model, ModelError};
use crate::nn::NnError;
use crate::prob::RngStream;
use crate::proposals::ProposalError;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Proposal(#[from] ProposalError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{skipped} of {batch} samples in a batch had non-finite log-density")]
    TooManySkipped { skipped: usize, batch: usize },
    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: u64, reason: String, trace: Vec<TraceRow> },
    #[error("invalid training configuration: {0}")]
    Config(String),
}

/// Which part of a signed target the q₁ objective weights by.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    /// `f` itself, which must be non-negative.
    None,
    /// `max(f − c, 0)`.
    Plus(f64),
    /// `max(c − f, 0)`.
    Minus(f64),
}

impl Truncation {
    pub fn apply(self, f: f64) -> f64 {
        match self {
            Truncation::None => f,
            Truncation::Plus(c) => (f - c).max(0.0),
            Truncation::Minus(c) => (c - f).max(0.0),
        }
    }
}

/// `λ(y, θ) > 0`, dividing the q₁ weight to rebalance datasets.
pub type Lambda = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ObjectiveKind {
    Q2Standard,
    Q1FixedF { theta: Vec<f64> },
    Q1ParamF,
    Q1ImportanceSampled { data: Arc<dyn DataProposal> },
}

#[derive(Clone)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub truncation: Truncation,
    pub lambda: Option<Lambda>,
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            ObjectiveKind::Q2Standard => "q2".to_string(),
            ObjectiveKind::Q1FixedF { theta } => format!("q1-fixed{theta:?}"),
            ObjectiveKind::Q1ParamF => "q1".to_string(),
            ObjectiveKind::Q1ImportanceSampled { .. } => "q1-is".to_string(),
        };
        f.debug_struct("Objective")
            .field("kind", &kind)
            .field("truncation", &self.truncation)
            .field("lambda", &self.lambda.is_some())
            .finish()
    }
}

impl Objective {
    pub fn q2() -> Self {
        Objective { kind: ObjectiveKind::Q2Standard, truncation: Truncation::None, lambda: None }
    }

    pub fn q1(truncation: Truncation) -> Self {
        Objective { kind: ObjectiveKind::Q1ParamF, truncation, lambda: None }
    }

    pub fn q1_fixed(theta: Vec<f64>, truncation: Truncation) -> Self {
        Objective { kind: ObjectiveKind::Q1FixedF { theta }, truncation, lambda: None }
    }

    pub fn q1_importance_sampled(data: Arc<dyn DataProposal>, truncation: Truncation) -> Self {
        Objective { kind: ObjectiveKind::Q1ImportanceSampled { data }, truncation, lambda: None }
    }

    pub fn with_lambda(mut self, lambda: Lambda) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn is_q2(&self) -> bool {
        matches!(self.kind, ObjectiveKind::Q2Standard)
    }

    /// Width of the conditioning input: `y`, or `(y, θ)` for parametric targets.
    pub fn cond_dim(&self, model: &dyn Model) -> usize {
        match self.kind {
            ObjectiveKind::Q2Standard | ObjectiveKind::Q1FixedF { .. } => model.y_dim(),
            _ => model.y_dim() + model.theta_dim(),
        }
    }

    fn log_lambda(&self, y: &[f64], theta: &[f64]) -> f64 {
        self.lambda.as_ref().map_or(0.0, |l| l(y, theta).ln())
    }

    /// One training example with its unshifted log-weight.
    pub fn generate(&self, model: &dyn Model, rng: &mut RngStream) -> Result<Example, TrainingError> {
        let ex = match &self.kind {
            ObjectiveKind::Q2Standard => {
                let x = model.sample_prior(rng);
                let y = model.sample_observation(&x, rng)?;
                Example { x, cond: y, log_weight: 0.0 }
            }
            ObjectiveKind::Q1FixedF { theta } => {
                let s = model.sample_joint(theta, rng)?;
                let lw = self.truncation.apply(s.f).ln() - self.log_lambda(&s.y, theta);
                Example { x: s.x, cond: s.y, log_weight: lw }
            }
            ObjectiveKind::Q1ParamF => {
                let theta = model.sample_theta(rng);
                let s = model.sample_joint(&theta, rng)?;
                let lw = self.truncation.apply(s.f).ln() - self.log_lambda(&s.y, &theta);
                let mut cond = s.y;
                cond.extend(&theta);
                Example { x: s.x, cond, log_weight: lw }
            }
            ObjectiveKind::Q1ImportanceSampled { data } => {
                let (theta, x, log_q) = data.sample(rng);
                let y = model.sample_observation(&x, rng)?;
                let f = self.truncation.apply(model.target(&x, &theta)?);
                let lw = if f > 0.0 {
                    model.log_theta_prior(&theta) + model.log_prior(&x) + f.ln() - log_q - self.log_lambda(&y, &theta)
                } else {
                    f64::NEG_INFINITY
                };
                let mut cond = y;
                cond.extend(&theta);
                Example { x, cond, log_weight: lw }
            }
        };
        if ex.log_weight.is_nan() || ex.log_weight == f64::INFINITY {
            return Err(TrainingError::Config(format!("objective produced log-weight {} (is λ positive?)", ex.log_weight)));
        }
        Ok(ex)
    }

    pub fn generate_set(&self, model: &dyn Model, n: usize, rng: &mut RngStream) -> Result<Vec<Example>, TrainingError> {
        (0..n).map(|_| self.generate(model, rng)).collect()
    }
}
