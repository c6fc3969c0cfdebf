use super::ProbError;
use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// log Σ exp(vᵢ) with the max-shift identity.
pub fn log_sum_exp(values: &[f64]) -> Result<f64, ProbError> {
    if values.is_empty() {
        return Err(ProbError::EmptyInput);
    }
    Ok(lse_nonempty(values))
}

/// log( (1/n) Σ exp(vᵢ) ).
pub fn log_mean_exp(values: &[f64]) -> Result<f64, ProbError> {
    Ok(log_sum_exp(values)? - (values.len() as f64).ln())
}

pub(crate) fn lse_nonempty(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    if values.len() == 1 {
        return values[0];
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// An importance weight carried as its logarithm.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
#[repr(transparent)]
pub struct LogWeight(pub f64);

impl LogWeight {
    /// log(γ(x) / q(x)) from the two log-densities.
    pub fn ratio(log_target: f64, log_proposal: f64) -> Self {
        if log_target == f64::NEG_INFINITY {
            return LogWeight(f64::NEG_INFINITY);
        }
        LogWeight(log_target - log_proposal)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Finite or −∞; +∞ and NaN are rejected by `WeightedBatch`.
    pub fn is_valid(self) -> bool {
        self.0.is_finite() || self.0 == f64::NEG_INFINITY
    }
}

/// A real number stored as `sign · exp(log_abs)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLog {
    sign: i8,
    log_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog { sign: 0, log_abs: f64::NEG_INFINITY };

    pub fn from_log(log_abs: f64) -> Self {
        if log_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            SignedLog { sign: 1, log_abs }
        }
    }

    pub fn new(sign: i8, log_abs: f64) -> Self {
        if sign == 0 || log_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            SignedLog { sign: sign.signum(), log_abs }
        }
    }

    pub fn from_f64(v: f64) -> Self {
        match v.partial_cmp(&0.0) {
            Some(Ordering::Greater) => SignedLog { sign: 1, log_abs: v.ln() },
            Some(Ordering::Less) => SignedLog { sign: -1, log_abs: (-v).ln() },
            _ => Self::ZERO,
        }
    }

    pub fn sign(self) -> i8 {
        self.sign
    }

    pub fn log_abs(self) -> f64 {
        self.log_abs
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.sign) * self.log_abs.exp()
    }
}

impl Neg for SignedLog {
    type Output = SignedLog;
    fn neg(self) -> SignedLog {
        SignedLog { sign: -self.sign, log_abs: self.log_abs }
    }
}

impl Add for SignedLog {
    type Output = SignedLog;
    fn add(self, rhs: SignedLog) -> SignedLog {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (hi, lo) = if self.log_abs >= rhs.log_abs { (self, rhs) } else { (rhs, self) };
        let d = (lo.log_abs - hi.log_abs).exp();
        if hi.sign == lo.sign {
            SignedLog { sign: hi.sign, log_abs: hi.log_abs + d.ln_1p() }
        } else if d == 1.0 {
            Self::ZERO
        } else {
            SignedLog { sign: hi.sign, log_abs: hi.log_abs + (-d).ln_1p() }
        }
    }
}

impl Sub for SignedLog {
    type Output = SignedLog;
    fn sub(self, rhs: SignedLog) -> SignedLog {
        self + (-rhs)
    }
}

impl Mul for SignedLog {
    type Output = SignedLog;
    fn mul(self, rhs: SignedLog) -> SignedLog {
        SignedLog::new(self.sign * rhs.sign, self.log_abs + rhs.log_abs)
    }
}

impl Div for SignedLog {
    type Output = SignedLog;
    /// Division by zero yields a signed infinity magnitude; callers guard it.
    fn div(self, rhs: SignedLog) -> SignedLog {
        SignedLog::new(self.sign * rhs.sign, self.log_abs - rhs.log_abs)
    }
}
