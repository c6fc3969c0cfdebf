use super::{check_non_negative, identity, EstimatorError, WeightedBatch};
use crate::prob::SignedLog;

/// The sample-reuse estimator
/// `(α Ê₁(q₁) + (1−α) Ê₁(q₂)) / (β Ê₂(q₁) + (1−β) Ê₂(q₂))`, where every
/// component is a plain IS mean over the batch drawn from the named proposal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CombinedAlphaBeta {
    pub alpha: f64,
    pub beta: f64,
    pub e1_q1: SignedLog,
    pub e1_q2: SignedLog,
    pub e2_q1: SignedLog,
    pub e2_q2: SignedLog,
    /// Samples drawn from `q₁`; the budget is `T = n + m`.
    pub n: usize,
    pub m: usize,
}

impl CombinedAlphaBeta {
    /// Both batches must carry `f ≥ 0`.
    pub fn from_batches(q1: &WeightedBatch, q2: &WeightedBatch, alpha: f64, beta: f64) -> Result<Self, EstimatorError> {
        check_non_negative(q1)?;
        check_non_negative(q2)?;
        let cab = CombinedAlphaBeta {
            alpha,
            beta,
            e1_q1: q1.weighted_mean(Some(&identity)),
            e1_q2: q2.weighted_mean(Some(&identity)),
            e2_q1: q1.weighted_mean(None),
            e2_q2: q2.weighted_mean(None),
            n: q1.len(),
            m: q2.len(),
        };
        cab.with_mixing(alpha, beta)
    }

    /// Same components, different interpolation.
    pub fn with_mixing(&self, alpha: f64, beta: f64) -> Result<Self, EstimatorError> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EstimatorError::InvalidArgument(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(CombinedAlphaBeta { alpha, beta, ..*self })
    }

    pub fn total(&self) -> usize {
        self.n + self.m
    }

    pub fn estimate(&self) -> Result<f64, EstimatorError> {
        combined_estimate(self)
    }
}

/// Zero-weighted components are dropped rather than multiplied, so `α = 1,
/// β = 0` assembles the same value as the two-term estimator.
fn mix(w: f64, a: SignedLog, b: SignedLog) -> SignedLog {
    let part = |c: f64, v: SignedLog| if c == 0.0 { SignedLog::ZERO } else { SignedLog::from_f64(c) * v };
    part(w, a) + part(1.0 - w, b)
}

pub fn combined_estimate(cab: &CombinedAlphaBeta) -> Result<f64, EstimatorError> {
    let num = mix(cab.alpha, cab.e1_q1, cab.e1_q2);
    let den = mix(cab.beta, cab.e2_q1, cab.e2_q2);
    if den.is_zero() {
        return Err(EstimatorError::DegenerateDenominator);
    }
    Ok((num / den).to_f64())
}

/// Per-sample variances of `f w` and `w` under each proposal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightVariances {
    pub fw_q1: f64,
    pub fw_q2: f64,
    pub w_q1: f64,
    pub w_q2: f64,
}

impl WeightVariances {
    /// Empirical estimates from previous batches drawn from `q₁` and `q₂`.
    pub fn from_batches(q1: &WeightedBatch, q2: &WeightedBatch) -> Result<Self, EstimatorError> {
        q1.require_values()?;
        q2.require_values()?;
        Ok(WeightVariances {
            fw_q1: q1.variance(Some(&identity)),
            fw_q2: q2.variance(Some(&identity)),
            w_q1: q1.variance(None),
            w_q2: q2.variance(None),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
    /// Set when a zero variance forced the limiting value.
    pub alpha_limit: bool,
    pub beta_limit: bool,
}

/// `N / ((T − N) V₁ / V₂ + N)`, the stationary point of
/// `c² V₁ / N + (1 − c)² V₂ / (T − N)`.
fn optimal_share(v1: f64, v2: f64, n: f64, t: f64) -> (f64, bool) {
    if v1 == 0.0 {
        (1.0, true)
    } else if v2 == 0.0 {
        (0.0, true)
    } else {
        (n / ((t - n) * (v1 / v2) + n), false)
    }
}

/// Variance-minimizing α and β for a budget of `total` samples of which `n`
/// come from `q₁`, ignoring correlation between numerator and denominator.
pub fn optimal_alpha_beta(v: &WeightVariances, n: usize, total: usize) -> Result<AlphaBeta, EstimatorError> {
    if n == 0 || n >= total {
        return Err(EstimatorError::InvalidArgument(format!("need 0 < N < T, got N = {n}, T = {total}")));
    }
    for (name, x) in [("fw_q1", v.fw_q1), ("fw_q2", v.fw_q2), ("w_q1", v.w_q1), ("w_q2", v.w_q2)] {
        if !(x >= 0.0) || x.is_infinite() {
            return Err(EstimatorError::InvalidArgument(format!("variance {name} = {x}")));
        }
    }
    let (n, t) = (n as f64, total as f64);
    let (alpha, alpha_limit) = optimal_share(v.fw_q1, v.fw_q2, n, t);
    let (beta, beta_limit) = optimal_share(v.w_q1, v.w_q2, n, t);
    Ok(AlphaBeta { alpha, beta, alpha_limit, beta_limit })
}
