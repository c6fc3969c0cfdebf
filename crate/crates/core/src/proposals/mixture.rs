//! Equal-weight two-component mixture `q_m = q1/2 + q2/2`.

use crate::prob::{DensityError, Distribution, RngStream};
use rand::Rng;
use std::f64::consts::LN_2;

pub struct MixtureProposal<'a> {
    pub first: &'a dyn Distribution,
    pub second: &'a dyn Distribution,
}

impl<'a> MixtureProposal<'a> {
    pub fn new(first: &'a dyn Distribution, second: &'a dyn Distribution) -> Self {
        MixtureProposal { first, second }
    }
}

fn combine(l1: f64, l2: f64) -> f64 {
    let m = l1.max(l2);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((l1 - m).exp() + (l2 - m).exp()).ln() - LN_2
}

impl Distribution for MixtureProposal<'_> {
    fn dim(&self) -> usize {
        self.first.dim()
    }

    /// A failed density evaluation of the other component yields NaN.
    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) -> f64 {
        if rng.random::<bool>() {
            let l1 = self.first.sample_into(rng, out);
            self.second.log_density(out).map_or(f64::NAN, |l2| combine(l1, l2))
        } else {
            let l2 = self.second.sample_into(rng, out);
            self.first.log_density(out).map_or(f64::NAN, |l1| combine(l1, l2))
        }
    }

    fn log_density(&self, x: &[f64]) -> Result<f64, DensityError> {
        Ok(combine(self.first.log_density(x)?, self.second.log_density(x)?))
    }
}
