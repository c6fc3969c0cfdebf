//! Experiment configuration. Every optional field is filled from
//! per-model defaults by [`ExperimentConfig::resolve`]; a resolved config
//! serializes back to a file that reproduces the run.

use crate::BenchError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tail1d,
    Tail5d,
    Cancer,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tail1d => "tail1d",
            ModelKind::Tail5d => "tail5d",
            ModelKind::Cancer => "cancer",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Amci,
    SnisQ2,
    SnisQ1,
    SnisQm,
    Combined,
    SnisBound,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Amci,
        EstimatorKind::SnisQ2,
        EstimatorKind::SnisQ1,
        EstimatorKind::SnisQm,
        EstimatorKind::Combined,
        EstimatorKind::SnisBound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Amci => "amci",
            EstimatorKind::SnisQ2 => "snis-q2",
            EstimatorKind::SnisQ1 => "snis-q1",
            EstimatorKind::SnisQm => "snis-qm",
            EstimatorKind::Combined => "combined",
            EstimatorKind::SnisBound => "snis-bound",
        }
    }

    /// Stable RNG tag; independent of the order estimators are listed in.
    pub fn stream_tag(self) -> u64 {
        match self {
            EstimatorKind::Amci => 1,
            EstimatorKind::SnisQ2 => 2,
            EstimatorKind::SnisQ1 => 3,
            EstimatorKind::SnisQm => 4,
            EstimatorKind::Combined => 5,
            EstimatorKind::SnisBound => 6,
        }
    }

    pub fn needs_q1(self) -> bool {
        matches!(self, EstimatorKind::Amci | EstimatorKind::SnisQ1 | EstimatorKind::SnisQm | EstimatorKind::Combined)
    }

    pub fn needs_q2(self) -> bool {
        matches!(self, EstimatorKind::Amci | EstimatorKind::SnisQ2 | EstimatorKind::SnisQm | EstimatorKind::Combined)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EstimatorKind::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown estimator `{s}`")))
    }
}

/// How the combined sample-reuse estimator picks its mixing weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum AlphaBetaSetting {
    Fixed { alpha: f64, beta: f64 },
    /// Plug-in optimum from the weight variances of each replicate's batches.
    OptimalEmpirical,
}

impl Default for AlphaBetaSetting {
    fn default() -> Self {
        AlphaBetaSetting::Fixed { alpha: 0.5, beta: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalSource {
    /// Load checkpoints from `proposals.q1` / `proposals.q2`.
    #[default]
    Checkpoint,
    /// Train both proposals before running.
    Train,
    /// Exact optimal proposals (1-D tail model only).
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalConfig {
    #[serde(default)]
    pub source: ProposalSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q1: Option<PathBuf>,
    /// Only needed when the target can fall below the truncation point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q1_minus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q2: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaSetting {
    /// `λ ≡ 1`.
    None,
    /// `λ(y, θ) = P(x > θ)` under the prior marginals (tail models).
    PriorTailMass,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// Geometric step-size decay target reached at the last step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_q1: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_q2: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaSetting>,
    /// Train q₁ on `q'(θ, x) p(y|x)` samples rather than the joint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub importance_sampled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_missteps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    /// Non-positive disables clipping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    /// Sampling-oracle draws (5-D tail).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    /// Tensor Gauss–Legendre order (cancer).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature_order: Option<usize>,
    /// A `truth.csv` written by the `truth` command for the same model,
    /// seed and datapoint count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

/// A datapoint given explicitly instead of drawn from `p(y) p(θ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPoint {
    pub y: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    /// Ignored when `points` is given.
    #[serde(default = "default_datapoints")]
    pub datapoints: usize,
    /// Explicit datapoints; replaces the random draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<FixedPoint>>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub alpha_beta: AlphaBetaSetting,
    /// Positivisation point `c`.
    #[serde(default)]
    pub truncation: f64,
    #[serde(default)]
    pub proposals: ProposalConfig,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub truth: TruthConfig,
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Amci, EstimatorKind::SnisQ2, EstimatorKind::SnisQm, EstimatorKind::SnisBound]
}

/// Thirteen log-spaced sample sizes from 2 to 10⁴.
pub fn default_n_grid() -> Vec<usize> {
    let mut g: Vec<usize> = (0..13).map(|i| (2.0 * 5000f64.powf(i as f64 / 12.0)).round() as usize).collect();
    g.dedup();
    g
}

fn default_datapoints() -> usize {
    100
}

fn default_replicates() -> usize {
    100
}

impl ExperimentConfig {
    pub fn new(model: ModelKind) -> Self {
        ExperimentConfig {
            model,
            seed: 0,
            estimators: default_estimators(),
            n_grid: default_n_grid(),
            datapoints: default_datapoints(),
            points: None,
            replicates: default_replicates(),
            alpha_beta: AlphaBetaSetting::default(),
            truncation: 0.0,
            proposals: ProposalConfig::default(),
            train: TrainSettings::default(),
            truth: TruthConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("reading {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        // relative checkpoint and cache paths are taken from the config's directory
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.proposals.q1, &mut cfg.proposals.q1_minus, &mut cfg.proposals.q2, &mut cfg.truth.cache].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// Fills every training and truth default for the model, then validates.
    pub fn resolve(mut self) -> Result<Self, BenchError> {
        let d = crate::setup::train_defaults(self.model);
        let t = &mut self.train;
        t.steps.get_or_insert(d.steps);
        t.learning_rate.get_or_insert(d.learning_rate);
        if t.final_learning_rate.is_none() {
            t.final_learning_rate = d.final_learning_rate;
        }
        t.hidden.get_or_insert(d.hidden);
        t.activation.get_or_insert(d.activation);
        t.family_q1.get_or_insert(d.family_q1);
        t.family_q2.get_or_insert(d.family_q2);
        t.lambda.get_or_insert(d.lambda);
        t.importance_sampled.get_or_insert(d.importance_sampled);
        t.train_size.get_or_insert(d.regime.train_size);
        t.validation_size.get_or_insert(d.regime.validation_size);
        t.batch_size.get_or_insert(d.regime.batch_size);
        t.max_missteps.get_or_insert(d.regime.max_missteps);
        t.max_epochs.get_or_insert(d.regime.max_epochs);
        t.clip_norm.get_or_insert(d.clip_norm);
        let truth = crate::setup::truth_defaults(self.model);
        self.truth.samples.get_or_insert(truth.samples);
        self.truth.quadrature_order.get_or_insert(truth.quadrature_order);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return bad(format!("n_grid must be non-empty positive sample sizes, got {:?}", self.n_grid));
        }
        if self.datapoints == 0 {
            return bad("datapoints must be positive".into());
        }
        if let Some(points) = &self.points {
            let m = crate::setup::BenchModel::new(self.model);
            let (yd, td) = (m.model().y_dim(), m.model().theta_dim());
            if points.is_empty() {
                return bad("points is present but empty".into());
            }
            if let Some(p) = points.iter().find(|p| p.y.len() != yd || p.theta.len() != td) {
                return bad(format!("point {p:?} needs {yd} observation and {td} parameter values"));
            }
        }
        if self.replicates < 2 {
            return bad(format!("replicates must be at least 2, got {}", self.replicates));
        }
        if !self.truncation.is_finite() {
            return bad(format!("truncation {}", self.truncation));
        }
        if let AlphaBetaSetting::Fixed { alpha, beta } = self.alpha_beta {
            if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
                return bad(format!("alpha and beta must lie in [0, 1], got ({alpha}, {beta})"));
            }
        }
        let mut seen = self.estimators.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.estimators.len() {
            return bad("estimators are listed more than once".into());
        }
        if self.proposals.source == ProposalSource::Oracle && self.model != ModelKind::Tail1d {
            return bad(format!("{} has no closed-form optimal proposals", self.model.as_str()));
        }
        crate::setup::check_train_settings(self)?;
        Ok(())
    }
}
