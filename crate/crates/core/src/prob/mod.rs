//! Probability primitives: densities, samplers, normal CDF helpers and
//! log-space weight arithmetic.
//!
//! Everything downstream (proposals, estimators, models) talks to
//! distributions through [`Distribution`], so trained proposals, exact
//! oracle proposals and plain [`Density`] values are interchangeable.

mod density;
mod logspace;
mod rng;
mod special;

pub use density::{Density, Family};
pub use logspace::{log_mean_exp, log_sum_exp, LogWeight, SignedLog};
pub use rng::RngStream;
pub use special::{
    log_normal_cdf, log_normal_sf, normal_cdf, normal_log_pdf, normal_quantile, normal_sf,
    normal_sf_inv, LN_2PI,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("invalid {family} parameterization: {reason}")]
    InvalidParameter { family: &'static str, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("log_sum_exp of an empty sequence")]
    EmptyInput,
    #[error("{0} is not available for this family")]
    Unsupported(&'static str),
}

/// A distribution that can be sampled and evaluated pointwise.
///
/// `sample_into` writes the draw into `out` and returns its log-density
/// under the same distribution, which lets flows skip numerical inversion
/// on the sampling path.
pub trait Distribution: Send + Sync {
    fn dim(&self) -> usize;

    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) -> f64;

    /// Log-density at `x`; negative infinity outside the support.
    fn log_density(&self, x: &[f64]) -> Result<f64, DensityError>;

    fn sample(&self, rng: &mut RngStream) -> (Vec<f64>, f64) {
        let mut x = vec![0.0; self.dim()];
        let lp = self.sample_into(rng, &mut x);
        (x, lp)
    }
}

/// Failure while evaluating a density at an externally supplied point.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("flow inversion did not converge (residual {residual:e})")]
    Inversion { residual: f64 },
}

impl Distribution for Density {
    fn dim(&self) -> usize {
        Density::dim(self)
    }

    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) -> f64 {
        self.sample_to(rng, out);
        self.log_pdf(out).unwrap_or(f64::NEG_INFINITY)
    }

    fn log_density(&self, x: &[f64]) -> Result<f64, DensityError> {
        Ok(self.log_pdf(x)?)
    }
}
