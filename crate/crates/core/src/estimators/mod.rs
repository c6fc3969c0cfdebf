//! Expectation estimators over importance-weighted batches: IS, SNIS,
//! the two- and three-proposal AMCI ratio estimators, the α/β sample-reuse
//! combination and the SNIS error bound.
//!
//! Weights stay in log space. Every reduction subtracts the batch maximum
//! before exponentiating, so sums are formed as `exp(m) · Σ f exp(lw − m)`
//! and carried forward as [`SignedLog`] values.

mod alpha_beta;
mod error;

pub use alpha_beta::{combined_estimate, optimal_alpha_beta, AlphaBeta, CombinedAlphaBeta, WeightVariances};
pub use error::{quantile, remse, snis_optimal_bound, ReplicateError};

use crate::models::{Evaluation, ModelError};
use crate::prob::{Distribution, LogWeight, RngStream, SignedLog};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("estimator needs at least one sample")]
    EmptyBatch,
    #[error("batch lengths disagree: {weights} weights, {values} function values")]
    LengthMismatch { weights: usize, values: usize },
    #[error("log-weight {value} at index {index} is not finite or -inf")]
    InvalidWeight { index: usize, value: f64 },
    #[error("function value {value} at index {index} is not finite")]
    InvalidValue { index: usize, value: f64 },
    #[error("batch carries no function values")]
    MissingValues,
    #[error("all importance weights are zero")]
    DegenerateWeights,
    #[error("normalizing-constant estimate is zero")]
    DegenerateDenominator,
    #[error("f = {value} < 0 at index {index}; use the positivised estimator for signed targets")]
    NegativeTarget { index: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Log-weights `log γ(x) − log q(x)` and, optionally, `f(x; θ)` per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedBatch {
    log_weights: Vec<f64>,
    values: Option<Vec<f64>>,
}

impl WeightedBatch {
    pub fn new(log_weights: Vec<f64>, values: Option<Vec<f64>>) -> Result<Self, EstimatorError> {
        if let Some((index, &value)) = log_weights.iter().enumerate().find(|(_, w)| !(w.is_finite() || **w == f64::NEG_INFINITY)) {
            return Err(EstimatorError::InvalidWeight { index, value });
        }
        if let Some(v) = &values {
            if v.len() != log_weights.len() {
                return Err(EstimatorError::LengthMismatch { weights: log_weights.len(), values: v.len() });
            }
            if let Some((index, &value)) = v.iter().enumerate().find(|(_, f)| !f.is_finite()) {
                return Err(EstimatorError::InvalidValue { index, value });
            }
        }
        Ok(WeightedBatch { log_weights, values })
    }

    /// Draws `n` samples from `q` and weights them against `eval(x).log_joint`.
    pub fn draw<E, F>(q: &dyn Distribution, n: usize, rng: &mut RngStream, mut eval: F) -> Result<Self, E>
    where
        E: From<EstimatorError>,
        F: FnMut(&[f64]) -> Result<Evaluation, E>,
    {
        let mut x = vec![0.0; q.dim()];
        let mut lw = Vec::with_capacity(n);
        let mut fv = Vec::with_capacity(n);
        for _ in 0..n {
            let lq = q.sample_into(rng, &mut x);
            let e = eval(&x)?;
            lw.push(LogWeight::ratio(e.log_joint, lq).value());
            fv.push(e.f);
        }
        Ok(WeightedBatch::new(lw, Some(fv))?)
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    fn require_values(&self) -> Result<&[f64], EstimatorError> {
        if self.is_empty() {
            return Err(EstimatorError::EmptyBatch);
        }
        self.values.as_deref().ok_or(EstimatorError::MissingValues)
    }

    fn max_log_weight(&self) -> f64 {
        self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Σ g(f) w` as a signed log value; `g = None` sums the bare weights.
    fn weighted_sum(&self, g: Option<&dyn Fn(f64) -> f64>) -> SignedLog {
        let m = self.max_log_weight();
        if m == f64::NEG_INFINITY {
            return SignedLog::ZERO;
        }
        let s: f64 = match (g, &self.values) {
            (Some(g), Some(v)) => self.log_weights.iter().zip(v).map(|(lw, f)| g(*f) * (lw - m).exp()).sum(),
            _ => self.log_weights.iter().map(|lw| (lw - m).exp()).sum(),
        };
        SignedLog::from_f64(s) * SignedLog::from_log(m)
    }

    fn weighted_mean(&self, g: Option<&dyn Fn(f64) -> f64>) -> SignedLog {
        self.weighted_sum(g) * SignedLog::from_log(-(self.len() as f64).ln())
    }

    /// Effective sample size `(Σw)² / Σw²` of the bare weights.
    pub fn ess(&self) -> f64 {
        let m = self.max_log_weight();
        if m == f64::NEG_INFINITY {
            return 0.0;
        }
        let (s, s2) = self.log_weights.iter().fold((0.0, 0.0), |(s, s2), lw| {
            let u = (lw - m).exp();
            (s + u, s2 + u * u)
        });
        s * s / s2
    }

    /// `g(f) w / exp(m)` per sample with `m` the maximum log-weight; `None`
    /// below two samples or when every weight is zero.
    fn shifted_terms(&self, g: Option<&dyn Fn(f64) -> f64>) -> Option<(Vec<f64>, f64)> {
        let m = self.max_log_weight();
        if self.len() < 2 || m == f64::NEG_INFINITY {
            return None;
        }
        let terms = match (g, &self.values) {
            (Some(g), Some(v)) => self.log_weights.iter().zip(v).map(|(lw, f)| g(*f) * (lw - m).exp()).collect(),
            _ => self.log_weights.iter().map(|lw| (lw - m).exp()).collect(),
        };
        Some((terms, m))
    }

    /// Relative standard deviation `sd(g(f) w) / |mean(g(f) w)|`, `None`
    /// below two samples or for a zero mean.
    fn relative_sd(&self, g: Option<&dyn Fn(f64) -> f64>) -> Option<f64> {
        let (terms, _) = self.shifted_terms(g)?;
        let (mean, var) = mean_var(&terms);
        (mean != 0.0).then(|| var.sqrt() / mean.abs())
    }

    /// Unbiased sample variance of `g(f) w` in linear units; zero below two
    /// samples.
    pub fn variance(&self, g: Option<&dyn Fn(f64) -> f64>) -> f64 {
        self.shifted_terms(g).map_or(0.0, |(terms, m)| mean_var(&terms).1 * (2.0 * m).exp())
    }
}

fn mean_var(terms: &[f64]) -> (f64, f64) {
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn identity(f: f64) -> f64 {
    f
}

/// `(1/N) Σ f w` against a normalized target.
pub fn is_estimate(batch: &WeightedBatch) -> Result<f64, EstimatorError> {
    let f = batch.require_values()?;
    let m = batch.max_log_weight();
    if m == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let s: f64 = batch.log_weights.iter().zip(f).map(|(lw, fi)| fi * (lw - m).exp()).sum::<f64>() / batch.len() as f64;
    // scale last in linear space when exp(m) is representable, so unit weights are exact
    let scale = m.exp();
    if scale.is_normal() && scale.is_finite() {
        Ok(s * scale)
    } else {
        Ok((SignedLog::from_f64(s) * SignedLog::from_log(m)).to_f64())
    }
}

/// `Σ f w / Σ w`.
pub fn snis_estimate(batch: &WeightedBatch) -> Result<f64, EstimatorError> {
    let f = batch.require_values()?;
    let m = batch.max_log_weight();
    if m == f64::NEG_INFINITY {
        return Err(EstimatorError::DegenerateWeights);
    }
    let (num, den) = batch
        .log_weights
        .iter()
        .zip(f)
        .fold((0.0, 0.0), |(num, den), (lw, fi)| {
            let u = (lw - m).exp();
            (num + fi * u, den + u)
        });
    Ok(num / den)
}

/// Per-estimate diagnostics for the asymptotic accuracy analysis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmciDiagnostics {
    /// Per-sample standard deviation of the numerator, `sqrt(N Var[Ê₁⁺ − Ê₁⁻])`.
    pub sigma1: Option<f64>,
    /// Per-sample standard deviation of the denominator terms.
    pub sigma2: Option<f64>,
    /// `σ₁ / (|μ̂| σ₂)`.
    pub kappa: Option<f64>,
    pub ess_plus: f64,
    pub ess_minus: f64,
    pub ess_denominator: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmciEstimate {
    pub value: f64,
    pub e1_plus: SignedLog,
    pub e1_minus: SignedLog,
    pub e2: SignedLog,
    /// Truncation point added back to the ratio.
    pub offset: f64,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub diagnostics: AmciDiagnostics,
}

fn check_non_negative(batch: &WeightedBatch) -> Result<(), EstimatorError> {
    let f = batch.require_values()?;
    match f.iter().enumerate().find(|(_, v)| **v < 0.0) {
        Some((index, &value)) => Err(EstimatorError::NegativeTarget { index, value }),
        None => Ok(()),
    }
}

/// `Ê₁ / Ê₂` with `Ê₁` from a batch drawn from `q₁` (carrying `f ≥ 0`) and
/// `Ê₂` from a batch drawn from `q₂`.
pub fn amci_two_term(numerator: &WeightedBatch, denominator: &WeightedBatch) -> Result<AmciEstimate, EstimatorError> {
    check_non_negative(numerator)?;
    assemble(numerator, &identity, None, denominator, 0.0)
}

/// `(Ê₁⁺ − Ê₁⁻) / Ê₂ + c`, where the batches carry raw `f` and the
/// estimator applies `f⁺ = max(f − c, 0)` and `f⁻ = max(c − f, 0)`.
///
/// `minus = None` asserts `f ≥ c` everywhere, so `Ê₁⁻ = 0` without sampling.
pub fn amci_positivised(
    plus: &WeightedBatch,
    minus: Option<&WeightedBatch>,
    denominator: &WeightedBatch,
    c: f64,
) -> Result<AmciEstimate, EstimatorError> {
    if !c.is_finite() {
        return Err(EstimatorError::InvalidArgument(format!("truncation point {c}")));
    }
    plus.require_values()?;
    if let Some(b) = minus {
        b.require_values()?;
    }
    let f_plus = move |f: f64| (f - c).max(0.0);
    let f_minus = move |f: f64| (c - f).max(0.0);
    assemble(plus, &f_plus, minus.map(|b| (b, &f_minus as &dyn Fn(f64) -> f64)), denominator, c)
}

fn assemble(
    plus: &WeightedBatch,
    g_plus: &dyn Fn(f64) -> f64,
    minus: Option<(&WeightedBatch, &dyn Fn(f64) -> f64)>,
    denominator: &WeightedBatch,
    offset: f64,
) -> Result<AmciEstimate, EstimatorError> {
    if denominator.is_empty() {
        return Err(EstimatorError::EmptyBatch);
    }
    let e1_plus = plus.weighted_mean(Some(g_plus));
    let e1_minus = minus.map_or(SignedLog::ZERO, |(b, g)| b.weighted_mean(Some(g)));
    let e2 = denominator.weighted_mean(None);
    if e2.is_zero() {
        return Err(EstimatorError::DegenerateDenominator);
    }
    let value = ((e1_plus - e1_minus) / e2).to_f64() + offset;

    let n = plus.len();
    let k = minus.map_or(0, |(b, _)| b.len());
    let m = denominator.len();
    // absolute per-sample sds, assembled from relative ones to avoid underflow
    let abs_sd = |rel: Option<f64>, mean: SignedLog| rel.map(|r| r * mean.log_abs().exp());
    let sd_plus = if e1_plus.is_zero() { Some(0.0) } else { abs_sd(plus.relative_sd(Some(g_plus)), e1_plus) };
    let sd_minus = match minus {
        None => Some(0.0),
        Some(_) if e1_minus.is_zero() => Some(0.0),
        Some((b, g)) => abs_sd(b.relative_sd(Some(g)), e1_minus),
    };
    let sigma1 = match (sd_plus, sd_minus) {
        (Some(p), Some(q)) => Some((p * p + if k > 0 { q * q * n as f64 / k as f64 } else { 0.0 }).sqrt()),
        _ => None,
    };
    let rel2 = denominator.relative_sd(None);
    let sigma2 = abs_sd(rel2, e2);
    let kappa = match (sigma1, rel2) {
        (Some(s1), Some(r2)) if value != 0.0 && r2 > 0.0 => {
            // σ₁ / (|μ̂| σ₂) with σ₂ = r₂ Ê₂, evaluated in log space
            Some((s1.ln() - r2.ln() - e2.log_abs() - value.abs().ln()).exp())
        }
        _ => None,
    };
    Ok(AmciEstimate {
        value,
        e1_plus,
        e1_minus,
        e2,
        offset,
        n,
        k,
        m,
        diagnostics: AmciDiagnostics {
            sigma1,
            sigma2,
            kappa,
            ess_plus: plus.ess(),
            ess_minus: minus.map_or(0.0, |(b, _)| b.ess()),
            ess_denominator: denominator.ess(),
        },
    })
}

#[cfg(test)]
mod tests;
