//! Per-model wiring: defaults, ground truth, proposal construction and
//! training.

use crate::config::{ExperimentConfig, LambdaSetting, ModelKind};
use crate::BenchError;
use amci::checkpoint::Checkpoint;
use amci::models::{CancerModel, GroundTruth, Model, TailModel};
use amci::nn::Activation;
use amci::prob::RngStream;
use amci::proposals::{ConditionalProposal, ConditionerSpec, Family};
use amci::training::{Objective, RefreshRegime, TrainConfig, TrainingReport, TrainingRun, Truncation};
use rand::RngCore;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

/// RNG path roots; every random choice in a run hangs off one of these.
pub(crate) const DATAPOINT_TAG: u64 = 1;
pub(crate) const TRUTH_TAG: u64 = 2;
pub(crate) const REPLICATE_TAG: u64 = 3;
const INIT_TAG: u64 = 4;
const TRAIN_TAG: u64 = 5;

pub enum BenchModel {
    Tail(TailModel),
    Cancer(CancerModel),
}

impl BenchModel {
    pub fn new(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Tail1d => BenchModel::Tail(TailModel::one_dim()),
            ModelKind::Tail5d => BenchModel::Tail(TailModel::five_dim()),
            ModelKind::Cancer => BenchModel::Cancer(CancerModel::default()),
        }
    }

    pub fn model(&self) -> &dyn Model {
        match self {
            BenchModel::Tail(m) => m,
            BenchModel::Cancer(m) => m,
        }
    }

    pub fn tail(&self) -> Option<&TailModel> {
        match self {
            BenchModel::Tail(m) => Some(m),
            BenchModel::Cancer(_) => None,
        }
    }

    /// Analytic for the 1-D tail, importance sampling against the exact
    /// posterior in 5-D, tensor quadrature for the cancer model.
    pub fn truth(&self, y: &[f64], theta: &[f64], cfg: &ExperimentConfig, rng: &mut RngStream) -> Result<GroundTruth, BenchError> {
        let samples = cfg.truth.samples.expect("resolved config");
        let order = cfg.truth.quadrature_order.expect("resolved config");
        Ok(match self {
            BenchModel::Tail(m) => m.truth(y, theta, samples, rng)?,
            BenchModel::Cancer(m) => m.quadrature_truth(y, order, rng)?,
        })
    }
}

pub struct TrainDefaults {
    pub steps: u64,
    pub learning_rate: f64,
    pub final_learning_rate: Option<f64>,
    pub hidden: Vec<usize>,
    pub activation: String,
    pub family_q1: String,
    pub family_q2: String,
    pub lambda: LambdaSetting,
    pub importance_sampled: bool,
    pub regime: RefreshRegime,
    pub clip_norm: f64,
}

pub fn train_defaults(kind: ModelKind) -> TrainDefaults {
    let regime = RefreshRegime::default();
    match kind {
        ModelKind::Tail1d => TrainDefaults {
            steps: 5_000,
            learning_rate: 1e-2,
            final_learning_rate: Some(1e-4),
            hidden: vec![64, 64, 64],
            activation: "tanh".into(),
            family_q1: "flow(1,10,affine)".into(),
            family_q2: "flow(1,10,affine)".into(),
            lambda: LambdaSetting::PriorTailMass,
            importance_sampled: true,
            regime,
            clip_norm: 10.0,
        },
        ModelKind::Tail5d => TrainDefaults {
            steps: 5_000,
            learning_rate: 1e-4,
            final_learning_rate: Some(1e-6),
            hidden: vec![128, 128, 128],
            activation: "tanh".into(),
            family_q1: "flow(5,10,affine)".into(),
            family_q2: "flow(5,10,affine)".into(),
            lambda: LambdaSetting::PriorTailMass,
            importance_sampled: true,
            regime,
            clip_norm: 10.0,
        },
        ModelKind::Cancer => TrainDefaults {
            steps: 5_000,
            learning_rate: 1e-3,
            final_learning_rate: Some(1e-5),
            hidden: vec![128, 128, 128],
            activation: "tanh".into(),
            family_q1: "product(gamma,beta)".into(),
            family_q2: "product(gamma,beta)".into(),
            lambda: LambdaSetting::None,
            importance_sampled: false,
            regime,
            clip_norm: 10.0,
        },
    }
}

pub struct TruthDefaults {
    pub samples: u64,
    pub quadrature_order: usize,
}

pub fn truth_defaults(_kind: ModelKind) -> TruthDefaults {
    TruthDefaults { samples: 10_000_000, quadrature_order: 48 }
}

/// Which proposal a checkpoint or training run is for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Q1,
    Q1Minus,
    Q2,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Q1 => "q1",
            Role::Q1Minus => "q1-minus",
            Role::Q2 => "q2",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Role::Q1 => 1,
            Role::Q1Minus => 2,
            Role::Q2 => 3,
        }
    }

    /// Default checkpoint file name inside a checkpoint directory.
    pub fn file_name(self) -> String {
        format!("{}.ckpt", self.as_str())
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "q1" => Ok(Role::Q1),
            "q1-minus" => Ok(Role::Q1Minus),
            "q2" => Ok(Role::Q2),
            _ => Err(BenchError::Config(format!("unknown proposal role `{s}` (expected q1, q1-minus or q2)"))),
        }
    }
}

fn family_for(cfg: &ExperimentConfig, role: Role) -> Result<Family, BenchError> {
    let spec = match role {
        Role::Q2 => cfg.train.family_q2.as_deref(),
        Role::Q1 | Role::Q1Minus => cfg.train.family_q1.as_deref(),
    }
    .expect("resolved config");
    spec.parse().map_err(|e| BenchError::Config(format!("proposal family: {e}")))
}

fn activation(cfg: &ExperimentConfig) -> Result<Activation, BenchError> {
    match cfg.train.activation.as_deref().expect("resolved config") {
        "tanh" => Ok(Activation::Tanh),
        "relu" => Ok(Activation::Relu),
        other => Err(BenchError::Config(format!("unknown activation `{other}`"))),
    }
}

/// Checks everything `train_role` would reject, so bad configs fail before
/// any work is done.
pub(crate) fn check_train_settings(cfg: &ExperimentConfig) -> Result<(), BenchError> {
    let model = BenchModel::new(cfg.model);
    let x_dim = model.model().x_dim();
    for role in [Role::Q1, Role::Q2] {
        let fam = family_for(cfg, role)?;
        if fam.dim() != x_dim {
            return Err(BenchError::Config(format!("{role} family {fam} has dimension {}, {} latents have {x_dim}", fam.dim(), cfg.model.as_str())));
        }
    }
    activation(cfg)?;
    let t = &cfg.train;
    if model.tail().is_none() {
        if t.lambda == Some(LambdaSetting::PriorTailMass) {
            return Err(BenchError::Config("lambda = \"prior-tail-mass\" needs a tail model".into()));
        }
        if t.importance_sampled == Some(true) {
            return Err(BenchError::Config("importance-sampled q1 training needs a data proposal; only the tail models ship one".into()));
        }
    }
    if !(t.learning_rate.expect("resolved config") >= 0.0) {
        return Err(BenchError::Config(format!("learning rate {:?}", t.learning_rate)));
    }
    if t.final_learning_rate.is_some_and(|f| !(f > 0.0)) {
        return Err(BenchError::Config(format!("final learning rate {:?}", t.final_learning_rate)));
    }
    Ok(())
}

/// Prior-matched initial slot values for the cancer families; the generic
/// reference elsewhere.
fn reference(model: ModelKind, family: &Family) -> Vec<f64> {
    match (model, family) {
        (ModelKind::Cancer, Family::Product(parts)) if parts == &[Family::Gamma, Family::Beta] => {
            vec![500.0, 25.0, 1.0 / 3.0, 15.0]
        }
        _ => family.default_reference(),
    }
}

pub fn objective(cfg: &ExperimentConfig, model: &BenchModel, role: Role) -> Objective {
    let truncation = match role {
        Role::Q2 => return Objective::q2(),
        Role::Q1 => Truncation::Plus(cfg.truncation),
        Role::Q1Minus => Truncation::Minus(cfg.truncation),
    };
    let mut obj = match (model.tail(), cfg.train.importance_sampled.expect("resolved config")) {
        (Some(tail), true) => Objective::q1_importance_sampled(Arc::new(tail.half_normal_data_proposal()), truncation),
        _ => Objective::q1(truncation),
    };
    if let (Some(tail), Some(LambdaSetting::PriorTailMass)) = (model.tail(), cfg.train.lambda) {
        let tail = tail.clone();
        obj = obj.with_lambda(Arc::new(move |_y: &[f64], theta: &[f64]| tail.prior_tail_mass(theta)));
    }
    obj
}

pub fn initial_proposal(cfg: &ExperimentConfig, model: &BenchModel, role: Role) -> Result<ConditionalProposal, BenchError> {
    let family = family_for(cfg, role)?;
    let cond_dim = objective(cfg, model, role).cond_dim(model.model());
    let spec = ConditionerSpec { hidden: cfg.train.hidden.clone().expect("resolved config"), activation: activation(cfg)? };
    let r = reference(cfg.model, &family);
    let mut rng = RngStream::derive(cfg.seed, &[INIT_TAG, role.tag()]);
    ConditionalProposal::new(family, cond_dim, &spec, &r, &mut rng).map_err(|e| BenchError::Config(format!("{role} proposal: {e}")))
}

pub fn train_config(cfg: &ExperimentConfig, role: Role) -> TrainConfig {
    let t = &cfg.train;
    let clip = t.clip_norm.expect("resolved config");
    TrainConfig {
        regime: RefreshRegime {
            train_size: t.train_size.expect("resolved config"),
            validation_size: t.validation_size.expect("resolved config"),
            max_missteps: t.max_missteps.expect("resolved config"),
            max_epochs: t.max_epochs.expect("resolved config"),
            batch_size: t.batch_size.expect("resolved config"),
        },
        learning_rate: t.learning_rate.expect("resolved config"),
        final_learning_rate: t.final_learning_rate,
        clip_norm: (clip > 0.0).then_some(clip),
        max_steps: t.steps.expect("resolved config"),
        max_seconds: None,
        seed: RngStream::derive(cfg.seed, &[TRAIN_TAG, role.tag()]).next_u64(),
    }
}

/// Trains one proposal from its configured initialization.
pub fn train_role(cfg: &ExperimentConfig, model: &BenchModel, role: Role) -> Result<(ConditionalProposal, TrainingReport), BenchError> {
    let q = initial_proposal(cfg, model, role)?;
    let run = TrainingRun::new(model.model(), objective(cfg, model, role), q, train_config(cfg, role))?;
    Ok(run.run()?)
}

pub fn save_proposal(q: &ConditionalProposal, cfg: &ExperimentConfig, role: Role, report: &TrainingReport, path: &Path) -> Result<(), BenchError> {
    let mut ck = q.to_checkpoint();
    ck.set_meta("model", cfg.model.as_str());
    ck.set_meta("role", role);
    ck.set_meta("seed", cfg.seed);
    ck.set_meta("steps", report.steps);
    ck.set_meta("best_val_loss", report.best_val_loss);
    ck.save(path).map_err(|e| BenchError::Io(format!("writing {}: {e}", path.display())))
}

/// Loads a checkpoint and checks that it was trained for this model and role.
pub fn load_proposal(path: &Path, cfg: &ExperimentConfig, role: Role) -> Result<ConditionalProposal, BenchError> {
    if !path.exists() {
        return Err(BenchError::MissingCheckpoint { role: role.as_str(), path: path.to_path_buf() });
    }
    let ck = Checkpoint::load(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
    for (key, want) in [("model", cfg.model.as_str()), ("role", role.as_str())] {
        match ck.meta(key) {
            Ok(v) if v == want => {}
            Ok(v) => return Err(BenchError::Config(format!("{} holds a {key} `{v}` proposal, expected `{want}`", path.display()))),
            Err(_) => {}
        }
    }
    let q = ConditionalProposal::from_checkpoint(&ck).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
    let model = BenchModel::new(cfg.model);
    let want = objective(cfg, &model, role).cond_dim(model.model());
    if q.cond_dim() != want || q.dim() != model.model().x_dim() {
        return Err(BenchError::Config(format!("{} does not match the {} {role} shape", path.display(), cfg.model.as_str())));
    }
    Ok(q)
}
