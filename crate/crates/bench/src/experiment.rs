//! Estimator sweeps over a common datapoint set.

use crate::config::{AlphaBetaSetting, EstimatorKind, ExperimentConfig, ProposalSource};
use crate::report::{ErrorReport, Metadata, ResultRow};
use crate::setup::{self, BenchModel, Role, DATAPOINT_TAG, REPLICATE_TAG, TRUTH_TAG};
use crate::BenchError;
use amci::estimators::{
    amci_positivised, optimal_alpha_beta, quantile, remse, snis_estimate, snis_optimal_bound, CombinedAlphaBeta, EstimatorError,
    WeightVariances, WeightedBatch,
};
use amci::models::{Evaluation, GroundTruth, Model, TailModel};
use amci::prob::{Distribution, RngStream};
use amci::proposals::{ConditionalProposal, MixtureProposal};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Pilot batches for the plug-in α/β come from this sub-stream.
const PILOT_TAG: u64 = 1 << 32;

/// One `(y, θ)` with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Datapoint {
    pub index: usize,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
    pub truth: GroundTruth,
}

/// The configured points, or `y, θ ~ p(y) p(θ)` each from its own stream.
pub fn draw_points(cfg: &ExperimentConfig, model: &dyn Model) -> Result<Vec<(Vec<f64>, Vec<f64>)>, BenchError> {
    if let Some(points) = &cfg.points {
        return Ok(points.iter().map(|p| (p.y.clone(), p.theta.clone())).collect());
    }
    (0..cfg.datapoints)
        .map(|d| {
            let mut rng = RngStream::derive(cfg.seed, &[DATAPOINT_TAG, d as u64]);
            let theta = model.sample_theta(&mut rng);
            let s = model.sample_joint(&theta, &mut rng)?;
            Ok((s.y, theta))
        })
        .collect()
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, BenchError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))
}

/// Draws the datapoints and computes (or loads) their ground truths.
pub fn datapoints(cfg: &ExperimentConfig, model: &BenchModel, jobs: usize) -> Result<Vec<Datapoint>, BenchError> {
    let points = draw_points(cfg, model.model())?;
    if let Some(path) = &cfg.truth.cache {
        let cached = crate::report::read_truth_csv(path)?;
        check_cache(path, &points, &cached)?;
        return Ok(cached);
    }
    pool(jobs)?.install(|| {
        points
            .into_par_iter()
            .enumerate()
            .map(|(d, (y, theta))| {
                let mut rng = RngStream::derive(cfg.seed, &[TRUTH_TAG, d as u64]);
                let truth = model.truth(&y, &theta, cfg, &mut rng)?;
                Ok(Datapoint { index: d, y, theta, truth })
            })
            .collect()
    })
}

fn check_cache(path: &Path, points: &[(Vec<f64>, Vec<f64>)], cached: &[Datapoint]) -> Result<(), BenchError> {
    let stale = || {
        BenchError::Config(format!(
            "truth cache {} was computed for different datapoints; regenerate it with `amci truth` using this config",
            path.display()
        ))
    };
    if cached.len() != points.len() {
        return Err(stale());
    }
    for (d, (y, theta)) in cached.iter().zip(points) {
        if &d.y != y || &d.theta != theta {
            return Err(stale());
        }
    }
    Ok(())
}

/// The proposals an experiment draws from.
pub enum ProposalSet {
    Trained { q1: Option<ConditionalProposal>, q1_minus: Option<ConditionalProposal>, q2: Option<ConditionalProposal> },
    Oracle(TailModel),
}

fn checkpoint_path(explicit: &Option<PathBuf>, dir: Option<&Path>, role: Role) -> Option<PathBuf> {
    dir.map(|d| d.join(role.file_name())).or_else(|| explicit.clone())
}

impl ProposalSet {
    /// Loads, trains or constructs what the configured estimators need.
    /// `checkpoint_dir` overrides the config paths with `<dir>/q1.ckpt` etc.
    pub fn prepare(cfg: &ExperimentConfig, model: &BenchModel, checkpoint_dir: Option<&Path>) -> Result<Self, BenchError> {
        let need_q1 = cfg.estimators.iter().any(|e| e.needs_q1());
        let need_q2 = cfg.estimators.iter().any(|e| e.needs_q2());
        let p = &cfg.proposals;
        match p.source {
            ProposalSource::Oracle => Ok(ProposalSet::Oracle(model.tail().expect("validated").clone())),
            ProposalSource::Train => {
                let q1 = need_q1.then(|| setup::train_role(cfg, model, Role::Q1).map(|r| r.0)).transpose()?;
                let q2 = need_q2.then(|| setup::train_role(cfg, model, Role::Q2).map(|r| r.0)).transpose()?;
                Ok(ProposalSet::Trained { q1, q1_minus: None, q2 })
            }
            ProposalSource::Checkpoint => {
                let load = |needed: bool, explicit: &Option<PathBuf>, role: Role| -> Result<Option<ConditionalProposal>, BenchError> {
                    if !needed {
                        return Ok(None);
                    }
                    match checkpoint_path(explicit, checkpoint_dir, role) {
                        Some(path) => setup::load_proposal(&path, cfg, role).map(Some),
                        None => Err(BenchError::MissingCheckpoint { role: role.as_str(), path: PathBuf::from(role.file_name()) }),
                    }
                };
                let q1 = load(need_q1, &p.q1, Role::Q1)?;
                let q2 = load(need_q2, &p.q2, Role::Q2)?;
                let minus_path = checkpoint_path(&p.q1_minus, checkpoint_dir, Role::Q1Minus).filter(|p| p.exists());
                let q1_minus = match minus_path {
                    Some(path) if need_q1 => Some(setup::load_proposal(&path, cfg, Role::Q1Minus)?),
                    _ => None,
                };
                Ok(ProposalSet::Trained { q1, q1_minus, q2 })
            }
        }
    }

    fn describe(&self, cfg: &ExperimentConfig, dir: Option<&Path>) -> Vec<String> {
        match self {
            ProposalSet::Oracle(_) => vec!["oracle".into()],
            ProposalSet::Trained { q1, q1_minus, q2 } => {
                if cfg.proposals.source == ProposalSource::Train {
                    return vec!["trained-inline".into()];
                }
                let p = &cfg.proposals;
                [(q1.is_some(), &p.q1, Role::Q1), (q1_minus.is_some(), &p.q1_minus, Role::Q1Minus), (q2.is_some(), &p.q2, Role::Q2)]
                    .into_iter()
                    .filter(|(present, _, _)| *present)
                    .filter_map(|(_, explicit, role)| checkpoint_path(explicit, dir, role))
                    .map(|path| path.display().to_string())
                    .collect()
            }
        }
    }

    fn condition(&self, y: &[f64], theta: &[f64]) -> Result<Conditioned, BenchError> {
        match self {
            ProposalSet::Oracle(tail) => {
                let o = tail.oracle_proposals(y, theta)?;
                Ok(Conditioned {
                    q1: Some(Box::new(o.q1_plus)),
                    q1_minus: o.q1_minus.map(|d| Box::new(d) as Box<dyn Distribution>),
                    q2: Some(Box::new(o.q2)),
                })
            }
            ProposalSet::Trained { q1, q1_minus, q2 } => {
                let joint: Vec<f64> = y.iter().chain(theta).copied().collect();
                let at = |q: &ConditionalProposal| -> Result<Box<dyn Distribution>, BenchError> {
                    let cond = if q.cond_dim() == y.len() { y } else { &joint[..] };
                    Ok(Box::new(q.condition(cond)?))
                };
                Ok(Conditioned {
                    q1: q1.as_ref().map(at).transpose()?,
                    q1_minus: q1_minus.as_ref().map(at).transpose()?,
                    q2: q2.as_ref().map(at).transpose()?,
                })
            }
        }
    }
}

struct Conditioned {
    q1: Option<Box<dyn Distribution>>,
    q1_minus: Option<Box<dyn Distribution>>,
    q2: Option<Box<dyn Distribution>>,
}

impl Conditioned {
    fn q1(&self) -> &dyn Distribution {
        self.q1.as_deref().expect("q1 loaded for this estimator")
    }

    fn q2(&self) -> &dyn Distribution {
        self.q2.as_deref().expect("q2 loaded for this estimator")
    }
}

/// An estimate, or `None` when every weight vanished.
type Attempt = Result<Option<f64>, BenchError>;

fn degenerate(e: EstimatorError) -> Attempt {
    match e {
        EstimatorError::DegenerateWeights | EstimatorError::DegenerateDenominator => Ok(None),
        EstimatorError::Model(m) => Err(m.into()),
        other => Err(BenchError::Numerical(other.to_string())),
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a dyn Model,
    point: &'a Datapoint,
    q: &'a Conditioned,
}

impl Context<'_> {
    fn draw(&self, q: &dyn Distribution, n: usize, rng: &mut RngStream) -> Result<WeightedBatch, BenchError> {
        let (y, theta) = (&self.point.y, &self.point.theta);
        let batch = WeightedBatch::draw(q, n, rng, |x: &[f64]| -> Result<Evaluation, EstimatorError> { Ok(self.model.evaluate(x, y, theta)?) });
        batch.map_err(|e| match e {
            EstimatorError::Model(m) => m.into(),
            other => BenchError::Numerical(other.to_string()),
        })
    }

    fn estimate(&self, kind: EstimatorKind, n: usize, rng: &mut RngStream) -> Attempt {
        let result = match kind {
            EstimatorKind::Amci => {
                let plus = self.draw(self.q.q1(), n, rng)?;
                let minus = self.q.q1_minus.as_deref().map(|q| self.draw(q, n, rng)).transpose()?;
                let den = self.draw(self.q.q2(), n, rng)?;
                amci_positivised(&plus, minus.as_ref(), &den, self.cfg.truncation).map(|e| e.value)
            }
            EstimatorKind::SnisQ2 => snis_estimate(&self.draw(self.q.q2(), n, rng)?),
            EstimatorKind::SnisQ1 => snis_estimate(&self.draw(self.q.q1(), n, rng)?),
            EstimatorKind::SnisQm => {
                let mix = MixtureProposal::new(self.q.q1(), self.q.q2());
                snis_estimate(&self.draw(&mix, n, rng)?)
            }
            EstimatorKind::Combined => {
                let (alpha, beta) = match self.cfg.alpha_beta {
                    AlphaBetaSetting::Fixed { alpha, beta } => (alpha, beta),
                    AlphaBetaSetting::OptimalEmpirical => {
                        let mut pilot = rng.split(PILOT_TAG);
                        let a = self.draw(self.q.q1(), n, &mut pilot)?;
                        let b = self.draw(self.q.q2(), n, &mut pilot)?;
                        let v = WeightVariances::from_batches(&a, &b).map_err(|e| BenchError::Numerical(e.to_string()))?;
                        if [v.fw_q1, v.fw_q2, v.w_q1, v.w_q2].iter().any(|x| !x.is_finite()) || n < 2 {
                            (1.0, 0.0)
                        } else {
                            let ab = optimal_alpha_beta(&v, n, 2 * n).map_err(|e| BenchError::Numerical(e.to_string()))?;
                            (ab.alpha, ab.beta)
                        }
                    }
                };
                let a = self.draw(self.q.q1(), n, rng)?;
                let b = self.draw(self.q.q2(), n, rng)?;
                CombinedAlphaBeta::from_batches(&a, &b, alpha, beta).and_then(|c| c.estimate())
            }
            EstimatorKind::SnisBound => unreachable!("closed form, not sampled"),
        };
        match result {
            Ok(v) => Ok(Some(v)),
            Err(e) => degenerate(e),
        }
    }
}

fn bound_row(point: &Datapoint, n: usize) -> Result<ResultRow, BenchError> {
    let mu = point.truth.value;
    let abs_dev = point.truth.abs_dev.ok_or_else(|| {
        BenchError::Config(format!("snis-bound needs E|f - mu| from the ground-truth oracle, which {} does not supply", point.truth.method.as_str()))
    })?;
    let mse = snis_optimal_bound(abs_dev, n);
    let delta = if mu != 0.0 { mse / (mu * mu) } else { mse };
    Ok(ResultRow {
        estimator: EstimatorKind::SnisBound,
        n,
        aggregate: false,
        datapoint: Some(point.index),
        delta,
        delta_se: Some(0.0),
        datapoint_q25: None,
        datapoint_q75: None,
        replicate_q25: delta,
        replicate_q75: delta,
        mse,
        truth: Some(mu),
        zero_fraction: 0.0,
        failures: 0,
    })
}

fn sampled_row(ctx: &Context<'_>, kind: EstimatorKind, n: usize) -> Result<ResultRow, BenchError> {
    let (mut estimates, mut failures, mut zeros) = (Vec::with_capacity(ctx.cfg.replicates), 0, 0);
    for r in 0..ctx.cfg.replicates {
        let mut rng = RngStream::derive(ctx.cfg.seed, &[REPLICATE_TAG, ctx.point.index as u64, kind.stream_tag(), n as u64, r as u64]);
        // a replicate whose weights all vanish carries no information and scores 0
        let v = match ctx.estimate(kind, n, &mut rng)? {
            Some(v) => v,
            None => {
                failures += 1;
                0.0
            }
        };
        if v == 0.0 {
            zeros += 1;
        }
        estimates.push(v);
    }
    let err = remse(&estimates, ctx.point.truth.value).map_err(|e| BenchError::Numerical(e.to_string()))?;
    Ok(ResultRow {
        estimator: kind,
        n,
        aggregate: false,
        datapoint: Some(ctx.point.index),
        delta: err.delta,
        delta_se: Some(err.delta_se),
        datapoint_q25: None,
        datapoint_q75: None,
        replicate_q25: err.delta_q25,
        replicate_q75: err.delta_q75,
        mse: err.mse,
        truth: Some(ctx.point.truth.value),
        zero_fraction: zeros as f64 / ctx.cfg.replicates as f64,
        failures,
    })
}

fn median_of(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    quantile(v, 0.5)
}

/// Median, quartiles and means across datapoints for one `(estimator, N)`.
pub fn aggregate(rows: &[ResultRow]) -> ResultRow {
    let mut delta: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    delta.sort_by(f64::total_cmp);
    let mut rq25: Vec<f64> = rows.iter().map(|r| r.replicate_q25).collect();
    let mut rq75: Vec<f64> = rows.iter().map(|r| r.replicate_q75).collect();
    let mut mse: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    ResultRow {
        estimator: rows[0].estimator,
        n: rows[0].n,
        aggregate: true,
        datapoint: None,
        delta: quantile(&delta, 0.5),
        delta_se: None,
        datapoint_q25: Some(quantile(&delta, 0.25)),
        datapoint_q75: Some(quantile(&delta, 0.75)),
        replicate_q25: median_of(&mut rq25),
        replicate_q75: median_of(&mut rq75),
        mse: median_of(&mut mse),
        truth: None,
        zero_fraction: rows.iter().map(|r| r.zero_fraction).sum::<f64>() / rows.len() as f64,
        failures: rows.iter().map(|r| r.failures).sum(),
    }
}

/// Runs every configured estimator at every `N` on every datapoint.
/// Output order is fixed by the config, not by scheduling, so any `jobs`
/// gives the same report.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    model: &BenchModel,
    proposals: &ProposalSet,
    points: Vec<Datapoint>,
    jobs: usize,
    checkpoint_dir: Option<&Path>,
) -> Result<ErrorReport, BenchError> {
    let per_point: Vec<Vec<ResultRow>> = pool(jobs)?.install(|| {
        points
            .par_iter()
            .map(|point| {
                let needs_sampling = cfg.estimators.iter().any(|e| *e != EstimatorKind::SnisBound);
                let q = if needs_sampling {
                    proposals.condition(&point.y, &point.theta)?
                } else {
                    Conditioned { q1: None, q1_minus: None, q2: None }
                };
                let ctx = Context { cfg, model: model.model(), point, q: &q };
                let mut rows = Vec::new();
                for &kind in &cfg.estimators {
                    for &n in &cfg.n_grid {
                        rows.push(match kind {
                            EstimatorKind::SnisBound => bound_row(point, n)?,
                            _ => sampled_row(&ctx, kind, n)?,
                        });
                    }
                }
                Ok(rows)
            })
            .collect::<Result<_, BenchError>>()
    })?;

    let cells = cfg.estimators.len() * cfg.n_grid.len();
    let mut rows = Vec::with_capacity(cells * (points.len() + 1));
    for cell in 0..cells {
        let group: Vec<ResultRow> = per_point.iter().map(|p| p[cell].clone()).collect();
        rows.push(aggregate(&group));
        rows.extend(group);
    }
    let mut methods: Vec<&str> = points.iter().map(|p| p.truth.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let metadata = Metadata {
        model: cfg.model.as_str().into(),
        seed: cfg.seed,
        datapoints: points.len(),
        replicates: cfg.replicates,
        truth_method: methods.join("+"),
        proposals: proposals.describe(cfg, checkpoint_dir),
    };
    Ok(ErrorReport { metadata, datapoints: points, rows })
}
