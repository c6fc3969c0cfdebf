use super::loss::{batch_loss, Example};
use super::{Objective, TrainingError};
use crate::models::Model;
use crate::nn::{clip_global_norm, AdamState, NnError};
use crate::prob::{log_mean_exp, RngStream};
use crate::proposals::{ConditionalProposal, Normalizer};
use rand::seq::SliceRandom;
use std::io::{self, Write};
use std::time::Instant;

/// Dataset-refresh mini-batching: fresh train/validation sets are drawn
/// whenever validation loss has risen more than `max_missteps` times or
/// `max_epochs` have run on the current sets.
#[derive(Clone, Debug, PartialEq)]
pub struct RefreshRegime {
    pub train_size: usize,
    pub validation_size: usize,
    pub max_missteps: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
}

impl Default for RefreshRegime {
    fn default() -> Self {
        RefreshRegime { train_size: 10_000, validation_size: 1_000, max_missteps: 2, max_epochs: 30, batch_size: 256 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefreshDecision {
    Continue,
    Refresh,
}

/// Misstep bookkeeping for one dataset cycle. A misstep is a validation
/// loss above the previous one.
#[derive(Clone, Debug)]
pub struct RefreshCounter {
    max_missteps: usize,
    max_epochs: usize,
    missteps: usize,
    epochs: usize,
    last: Option<f64>,
}

impl RefreshCounter {
    pub fn new(max_missteps: usize, max_epochs: usize) -> Self {
        RefreshCounter { max_missteps, max_epochs, missteps: 0, epochs: 0, last: None }
    }

    pub fn missteps(&self) -> usize {
        self.missteps
    }

    /// Records the loss at the start of a cycle, before any epoch.
    pub fn baseline(&mut self, val: f64) {
        self.missteps = 0;
        self.epochs = 0;
        self.last = Some(val);
    }

    /// Records the validation loss after an epoch.
    pub fn observe(&mut self, val: f64) -> RefreshDecision {
        self.epochs += 1;
        if self.last.is_some_and(|l| val > l) {
            self.missteps += 1;
        }
        self.last = Some(val);
        if self.missteps > self.max_missteps || self.epochs >= self.max_epochs {
            RefreshDecision::Refresh
        } else {
            RefreshDecision::Continue
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub regime: RefreshRegime,
    pub learning_rate: f64,
    /// When set, the step size decays geometrically from `learning_rate`
    /// to this value over `max_steps`.
    pub final_learning_rate: Option<f64>,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub max_steps: u64,
    /// Optional wall-clock cap. Runs stopped by it are not reproducible.
    pub max_seconds: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            regime: RefreshRegime::default(),
            learning_rate: 1e-2,
            final_learning_rate: None,
            clip_norm: Some(10.0),
            max_steps: 5_000,
            max_seconds: None,
            seed: 0,
        }
    }
}

/// One line of the loss trace. Epoch 0 is the validation baseline taken
/// when a cycle's datasets are drawn; its train loss is NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub epoch: usize,
    pub cycle: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub missteps: usize,
    pub refresh: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    pub trace: Vec<TraceRow>,
    pub best_val_loss: f64,
    pub best_step: u64,
    pub steps: u64,
    pub cycles: usize,
    pub refreshes: usize,
    pub skipped: usize,
    pub capped: usize,
    pub zero_weight_batches: usize,
    /// Log of the constant dividing all importance weights in this run.
    pub log_scale: f64,
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceRow]) -> io::Result<()> {
    writeln!(w, "step,epoch,cycle,train_loss,val_loss,missteps,refresh")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.step,
            r.epoch,
            r.cycle,
            fmt_f64(r.train_loss),
            fmt_f64(r.val_loss),
            r.missteps,
            u8::from(r.refresh)
        )?;
    }
    Ok(())
}

/// Validation sets share the batch-level skip policy, applied per chunk.
fn evaluate(q: &ConditionalProposal, set: &[Example], log_scale: f64, chunk: usize) -> Result<(f64, usize), TrainingError> {
    let mut total = 0.0;
    let mut skipped = 0;
    for part in set.chunks(chunk.max(100)) {
        let refs: Vec<&Example> = part.iter().collect();
        let l = batch_loss(q, &refs, log_scale, false)?;
        total += l.value * part.len() as f64;
        skipped += l.skipped;
    }
    Ok((total / set.len() as f64, skipped))
}

/// Owns a proposal while it trains.
pub struct TrainingRun<'m> {
    model: &'m dyn Model,
    objective: Objective,
    proposal: ConditionalProposal,
    config: TrainConfig,
}

impl<'m> TrainingRun<'m> {
    pub fn new(model: &'m dyn Model, objective: Objective, proposal: ConditionalProposal, config: TrainConfig) -> Result<Self, TrainingError> {
        let want = objective.cond_dim(model);
        if proposal.cond_dim() != want {
            return Err(TrainingError::Config(format!("proposal conditions on {} inputs, objective supplies {want}", proposal.cond_dim())));
        }
        if proposal.dim() != model.x_dim() {
            return Err(TrainingError::Config(format!("proposal has dimension {}, model latent has {}", proposal.dim(), model.x_dim())));
        }
        let r = &config.regime;
        if r.train_size == 0 || r.validation_size == 0 || r.batch_size == 0 || r.max_epochs == 0 {
            return Err(TrainingError::Config(format!("degenerate refresh regime {r:?}")));
        }
        if !(config.learning_rate >= 0.0) {
            return Err(TrainingError::Config(format!("learning rate {}", config.learning_rate)));
        }
        if let Some(f) = config.final_learning_rate {
            if !(f > 0.0 && config.learning_rate > 0.0) {
                return Err(TrainingError::Config(format!("learning rate decay {} -> {f}", config.learning_rate)));
            }
        }
        Ok(TrainingRun { model, objective, proposal, config })
    }

    /// Runs the refresh loop to the step budget and returns the parameters
    /// with the best validation loss seen.
    pub fn run(self) -> Result<(ConditionalProposal, TrainingReport), TrainingError> {
        let TrainingRun { model, objective, mut proposal, config } = self;
        let regime = &config.regime;
        let started = Instant::now();
        let out_of_time = || config.max_seconds.is_some_and(|s| started.elapsed().as_secs_f64() >= s);
        let mut adam = AdamState::new(proposal.n_params(), config.learning_rate);
        let mut counter = RefreshCounter::new(regime.max_missteps, regime.max_epochs);
        let mut report = TrainingReport {
            trace: Vec::new(),
            best_val_loss: f64::INFINITY,
            best_step: 0,
            steps: 0,
            cycles: 0,
            refreshes: 0,
            skipped: 0,
            capped: 0,
            zero_weight_batches: 0,
            log_scale: 0.0,
        };
        let mut best_params = proposal.params().to_vec();
        let mut step = 0u64;
        let mut cycle = 0usize;
        let diverged = |step: u64, reason: String, trace: &[TraceRow]| TrainingError::Divergence { step, reason, trace: trace.to_vec() };

        'cycles: loop {
            let train = objective.generate_set(model, regime.train_size, &mut RngStream::derive(config.seed, &[cycle as u64, 0]))?;
            let val = objective.generate_set(model, regime.validation_size, &mut RngStream::derive(config.seed, &[cycle as u64, 1]))?;
            if cycle == 0 {
                if proposal.cond_dim() > 0 {
                    let rows: Vec<Vec<f64>> = train.iter().map(|e| e.cond.clone()).collect();
                    proposal.set_normalizer(Normalizer::fit(&rows, proposal.cond_dim()))?;
                }
                if !objective.is_q2() {
                    let lw: Vec<f64> = train.iter().map(|e| e.log_weight).collect();
                    let s = log_mean_exp(&lw).map_err(|e| TrainingError::Config(e.to_string()))?;
                    if !s.is_finite() {
                        return Err(TrainingError::Config("every training weight is zero; use an importance-sampled objective".into()));
                    }
                    report.log_scale = s;
                }
            }
            let scale = report.log_scale;
            let (base, skipped) = evaluate(&proposal, &val, scale, regime.batch_size)?;
            report.skipped += skipped;
            counter.baseline(base);
            if base < report.best_val_loss {
                report.best_val_loss = base;
                report.best_step = step;
                best_params.copy_from_slice(proposal.params());
            }
            report.trace.push(TraceRow { step, epoch: 0, cycle, train_loss: f64::NAN, val_loss: base, missteps: 0, refresh: false });
            report.cycles = cycle + 1;

            let cycle_start = step;
            let mut order: Vec<usize> = (0..train.len()).collect();
            for epoch in 1..=regime.max_epochs {
                order.shuffle(&mut RngStream::derive(config.seed, &[cycle as u64, 2, epoch as u64]));
                let (mut train_sum, mut train_batches) = (0.0, 0usize);
                let mut stop = false;
                for chunk in order.chunks(regime.batch_size) {
                    if step >= config.max_steps || out_of_time() {
                        stop = true;
                        break;
                    }
                    let refs: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
                    let mut bl = batch_loss(&proposal, &refs, scale, true)?;
                    report.skipped += bl.skipped;
                    report.capped += bl.capped;
                    if bl.active == 0 {
                        report.zero_weight_batches += 1;
                        continue;
                    }
                    if !bl.value.is_finite() {
                        return Err(diverged(step + 1, format!("non-finite batch loss {}", bl.value), &report.trace));
                    }
                    if let Some(max) = config.clip_norm {
                        clip_global_norm(&mut bl.grad, max);
                    }
                    if let Some(f) = config.final_learning_rate {
                        let t = step as f64 / config.max_steps.max(1) as f64;
                        adam.lr = config.learning_rate * (f / config.learning_rate).powf(t);
                    }
                    adam.step(proposal.params_mut(), &bl.grad).map_err(|e| match e {
                        NnError::Divergence { step } => diverged(step, "non-finite gradient".into(), &report.trace),
                        other => other.into(),
                    })?;
                    step += 1;
                    train_sum += bl.value;
                    train_batches += 1;
                }
                let (v, skipped) = evaluate(&proposal, &val, scale, regime.batch_size)?;
                report.skipped += skipped;
                if !v.is_finite() {
                    return Err(diverged(step, format!("non-finite validation loss {v}"), &report.trace));
                }
                if v < report.best_val_loss {
                    report.best_val_loss = v;
                    report.best_step = step;
                    best_params.copy_from_slice(proposal.params());
                }
                let decision = counter.observe(v);
                let refresh = !stop && decision == RefreshDecision::Refresh;
                let train_loss = if train_batches > 0 { train_sum / train_batches as f64 } else { f64::NAN };
                report.trace.push(TraceRow { step, epoch, cycle, train_loss, val_loss: v, missteps: counter.missteps(), refresh });
                if stop || (step >= config.max_steps) {
                    break 'cycles;
                }
                if refresh {
                    report.refreshes += 1;
                    break;
                }
            }
            if step == cycle_start {
                return Err(TrainingError::Config(format!("cycle {cycle} had no batch with non-zero weight")));
            }
            cycle += 1;
        }
        report.steps = step;
        proposal.params_mut().copy_from_slice(&best_params);
        Ok((proposal, report))
    }
}
