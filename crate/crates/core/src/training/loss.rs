use super::{Lambda, TrainingError, Truncation};
use crate::nn::Tape;
use crate::proposals::{ConditionalProposal, ProposalError};

/// Weighted examples above this log-weight (after the shift) are capped.
pub(crate) const LOG_WEIGHT_CAP: f64 = 30.0;
/// Largest tolerated fraction of non-finite log-densities in one batch.
pub(crate) const MAX_SKIP_FRACTION: f64 = 0.01;

/// A training point `x` with its conditioning input and log-weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub cond: Vec<f64>,
    pub log_weight: f64,
}

/// A draw `(x, y) ~ p(x, y)` with `θ ~ p(θ)` and `f(x; θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDraw {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
    pub f: f64,
}

/// A draw `(θ, x) ~ q'`, `y ~ p(y | x)`, with the densities the weight needs.
#[derive(Clone, Debug, PartialEq)]
pub struct IsSample {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f: f64,
    pub log_theta_prior: f64,
    pub log_prior: f64,
    pub log_data_proposal: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchLoss {
    /// `mean_i w_i (−log q(x_i; cond_i))` with `w_i = exp(lw_i − log_scale)`.
    pub value: f64,
    /// Empty when only the value was requested.
    pub grad: Vec<f64>,
    pub log_scale: f64,
    /// Examples with non-zero weight.
    pub active: usize,
    /// Non-finite log-densities left out of the sum.
    pub skipped: usize,
    /// Weights clipped at the cap.
    pub capped: usize,
}

fn skippable(e: &ProposalError) -> bool {
    matches!(e, ProposalError::Degenerate { .. } | ProposalError::Density(_))
}

/// The weighted negative log-likelihood of `q` on `batch`; the gradient is
/// recorded on a single tape when `with_grad` is set.
pub fn batch_loss(
    q: &ConditionalProposal,
    batch: &[&Example],
    log_scale: f64,
    with_grad: bool,
) -> Result<BatchLoss, TrainingError> {
    if batch.is_empty() {
        return Err(TrainingError::Config("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut tape = Tape::new(q.params());
    let mut total = None;
    let mut value = 0.0;
    let (mut active, mut skipped, mut capped) = (0, 0, 0);
    for ex in batch {
        let mut lw = ex.log_weight - log_scale;
        if lw == f64::NEG_INFINITY {
            continue;
        }
        if lw > LOG_WEIGHT_CAP {
            lw = LOG_WEIGHT_CAP;
            capped += 1;
        }
        let w = lw.exp();
        active += 1;
        if with_grad {
            match q.tape_log_density(&mut tape, &ex.x, &ex.cond) {
                Ok(lq) if tape.scalar(lq).is_finite() => {
                    value -= w * tape.scalar(lq) / n;
                    let term = tape.scale(lq, -w / n);
                    total = Some(match total {
                        None => term,
                        Some(t) => tape.add(t, term)?,
                    });
                }
                Ok(_) => skipped += 1,
                Err(e) if skippable(&e) => skipped += 1,
                Err(e) => return Err(e.into()),
            }
        } else {
            match q.log_density(&ex.x, &ex.cond) {
                Ok(lq) if lq.is_finite() => value -= w * lq / n,
                Ok(_) => skipped += 1,
                Err(e) if skippable(&e) => skipped += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }
    if skipped as f64 > MAX_SKIP_FRACTION * n {
        return Err(TrainingError::TooManySkipped { skipped, batch: batch.len() });
    }
    let grad = match (with_grad, total) {
        (false, _) => Vec::new(),
        (true, None) => vec![0.0; q.n_params()],
        (true, Some(t)) => tape.backward(t)?.into_params(),
    };
    Ok(BatchLoss { value, grad, log_scale, active, skipped, capped })
}

fn owned_loss(q: &ConditionalProposal, examples: &[Example], log_scale: f64) -> Result<BatchLoss, TrainingError> {
    let refs: Vec<&Example> = examples.iter().collect();
    batch_loss(q, &refs, log_scale, true)
}

/// `mean −log q₂(x; y)` over draws from the joint.
pub fn loss_q2(q: &ConditionalProposal, batch: &[(Vec<f64>, Vec<f64>)]) -> Result<BatchLoss, TrainingError> {
    let ex: Vec<Example> = batch.iter().map(|(x, y)| Example { x: x.clone(), cond: y.clone(), log_weight: 0.0 }).collect();
    owned_loss(q, &ex, 0.0)
}

fn lambda_of(lambda: Option<&Lambda>, y: &[f64], theta: &[f64]) -> f64 {
    lambda.map_or(1.0, |l| l(y, theta))
}

/// `mean −f^role(x; θ) / λ(y, θ) · log q₁(x; y, θ)`; conditioning is `(y, θ)`.
pub fn loss_q1(
    q: &ConditionalProposal,
    batch: &[JointDraw],
    truncation: Truncation,
    lambda: Option<&Lambda>,
) -> Result<BatchLoss, TrainingError> {
    let ex: Vec<Example> = batch
        .iter()
        .map(|d| {
            let w = truncation.apply(d.f) / lambda_of(lambda, &d.y, &d.theta);
            let mut cond = d.y.clone();
            cond.extend(&d.theta);
            Example { x: d.x.clone(), cond, log_weight: w.ln() }
        })
        .collect();
    owned_loss(q, &ex, 0.0)
}

/// Importance-sampled q₁ loss with weights `p(θ) p(x) f / (q' λ)`, formed in
/// log space and shifted by the batch maximum before exponentiation.
pub fn loss_q1_is(
    q: &ConditionalProposal,
    batch: &[IsSample],
    truncation: Truncation,
    lambda: Option<&Lambda>,
) -> Result<BatchLoss, TrainingError> {
    let ex: Vec<Example> = batch
        .iter()
        .map(|s| {
            let f = truncation.apply(s.f);
            let lw = if f > 0.0 {
                s.log_theta_prior + s.log_prior + f.ln() - s.log_data_proposal - lambda_of(lambda, &s.y, &s.theta).ln()
            } else {
                f64::NEG_INFINITY
            };
            let mut cond = s.y.clone();
            cond.extend(&s.theta);
            Example { x: s.x.clone(), cond, log_weight: lw }
        })
        .collect();
    let shift = ex.iter().map(|e| e.log_weight).fold(f64::NEG_INFINITY, f64::max);
    owned_loss(q, &ex, if shift.is_finite() { shift } else { 0.0 })
}
