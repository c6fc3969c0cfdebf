//! Tumor growth under treatment:
//! `dc/dt = -lambda c ln(c/K) - eps c`, `dK/dt = phi c - psi K c^(2/3)`.
//!
//! Fixed-step RK4. Steps are taken in pairs and compared against one step
//! of twice the size; when the Richardson estimate exceeds the tolerance
//! the pair is redone with halved steps, up to a refinement cap. Accepted
//! unrefined pairs are exactly plain RK4 at the nominal step. Below
//! `LOG_FLOOR` the tumor size is integrated as `u = ln c`, which keeps it
//! positive.

use thiserror::Error;

pub const PHI: f64 = 5.85;
pub const PSI: f64 = 0.00873;
pub const LAMBDA: f64 = 0.1923;
pub const K0: f64 = 700.0;
const LOG_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("invalid tumor initial condition c0={c0}, eps={eps}")]
    InvalidInput { c0: f64, eps: f64 },
    #[error("step refinement cap reached near t={t} (error estimate {estimate:e})")]
    Unstable { t: f64, estimate: f64 },
    #[error("output times must be non-negative and non-decreasing")]
    BadTimes,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TumorOde {
    pub phi: f64,
    pub psi: f64,
    pub lambda: f64,
    pub k0: f64,
    pub step: f64,
    /// Relative error tolerated per step pair before refining.
    pub tolerance: f64,
    /// Maximum number of step halvings per pair.
    pub max_refine: u32,
    pub monitor: bool,
}

impl Default for TumorOde {
    fn default() -> Self {
        TumorOde { phi: PHI, psi: PSI, lambda: LAMBDA, k0: K0, step: 0.05, tolerance: 1e-7, max_refine: 8, monitor: true }
    }
}

/// `(c, K)` in linear or log-c coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TumorState {
    pub c: f64,
    pub k: f64,
}

impl TumorOde {
    /// Right-hand side at `(c, K)`.
    pub fn rates(&self, eps: f64, c: f64, k: f64) -> (f64, f64) {
        let c23 = c.cbrt() * c.cbrt();
        (-self.lambda * c * (c / k).ln() - eps * c, self.phi * c - self.psi * k * c23)
    }

    fn rates_log(&self, eps: f64, u: f64, k: f64) -> (f64, f64) {
        let c = u.exp();
        (-self.lambda * (u - k.ln()) - eps, self.phi * c - self.psi * k * (2.0 * u / 3.0).exp())
    }

    fn rk4(&self, eps: f64, s: (f64, f64), h: f64, log_c: bool) -> (f64, f64) {
        let f = |a: f64, b: f64| if log_c { self.rates_log(eps, a, b) } else { self.rates(eps, a, b) };
        let k1 = f(s.0, s.1);
        let k2 = f(s.0 + 0.5 * h * k1.0, s.1 + 0.5 * h * k1.1);
        let k3 = f(s.0 + 0.5 * h * k2.0, s.1 + 0.5 * h * k2.1);
        let k4 = f(s.0 + h * k3.0, s.1 + h * k3.1);
        (s.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0), s.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1))
    }

    fn pair_error(a: (f64, f64), b: (f64, f64)) -> f64 {
        let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1e-300);
        (rel(a.0, b.0).max(rel(a.1, b.1)) / 15.0).max(if a.0.is_finite() && a.1.is_finite() { 0.0 } else { f64::INFINITY })
    }

    /// Advances `state` by `span` using `n` nominal steps of `span / n`.
    fn advance(&self, eps: f64, state: TumorState, span: f64, t0: f64) -> Result<TumorState, OdeError> {
        if span <= 0.0 {
            return Ok(state);
        }
        let n = (span / self.step - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        let mut s = state;
        let mut i = 0;
        while i < n {
            let log_c = s.c < LOG_FLOOR;
            let start = if log_c { (s.c.ln(), s.k) } else { (s.c, s.k) };
            let pair = (n - i).min(2);
            let end = if !self.monitor || pair == 1 {
                let mut y = start;
                for _ in 0..pair {
                    y = self.rk4(eps, y, h, log_c);
                }
                if self.monitor && !(y.0.is_finite() && y.1.is_finite()) {
                    return Err(OdeError::Unstable { t: t0 + i as f64 * h, estimate: f64::INFINITY });
                }
                y
            } else {
                self.refined_pair(eps, start, h, log_c, t0 + i as f64 * h)?
            };
            s = if log_c { TumorState { c: end.0.exp(), k: end.1 } } else { TumorState { c: end.0, k: end.1 } };
            if !log_c && s.c <= 0.0 {
                // Linear step overshot zero: redo this stretch in log-c.
                let mut y = (state_ln(start.0), start.1);
                for _ in 0..pair {
                    y = self.rk4(eps, y, h, true);
                }
                s = TumorState { c: y.0.exp(), k: y.1 };
            }
            i += pair;
        }
        Ok(s)
    }

    fn refined_pair(&self, eps: f64, start: (f64, f64), h: f64, log_c: bool, t: f64) -> Result<(f64, f64), OdeError> {
        let mut pieces = 2usize;
        let mut hh = h;
        let mut estimate = f64::INFINITY;
        for _ in 0..=self.max_refine {
            let coarse = self.rk4_n(eps, start, 2.0 * hh, pieces / 2, log_c);
            let fine = self.rk4_n(eps, start, hh, pieces, log_c);
            estimate = Self::pair_error(fine, coarse);
            if estimate <= self.tolerance {
                return Ok(fine);
            }
            pieces *= 2;
            hh *= 0.5;
        }
        Err(OdeError::Unstable { t, estimate })
    }

    fn rk4_n(&self, eps: f64, start: (f64, f64), h: f64, n: usize, log_c: bool) -> (f64, f64) {
        let mut y = start;
        for _ in 0..n {
            y = self.rk4(eps, y, h, log_c);
        }
        y
    }

    /// Tumor sizes at each of `times` (non-decreasing, from t=0).
    pub fn simulate(&self, c0: f64, eps: f64, times: &[f64]) -> Result<Vec<f64>, OdeError> {
        if !(c0 > 0.0 && c0.is_finite()) || !(0.0..=1.0).contains(&eps) {
            return Err(OdeError::InvalidInput { c0, eps });
        }
        let mut s = TumorState { c: c0, k: self.k0 };
        let mut t = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            if !(target >= t) {
                return Err(OdeError::BadTimes);
            }
            s = self.advance(eps, s, target - t, t)?;
            t = target;
            out.push(s.c);
        }
        Ok(out)
    }

    /// Resumes from a saved state at time `from`.
    pub fn resume(&self, state: TumorState, eps: f64, from: f64, to: f64) -> Result<TumorState, OdeError> {
        if !(to >= from) {
            return Err(OdeError::BadTimes);
        }
        self.advance(eps, state, to - from, from)
    }

    pub fn state_at(&self, c0: f64, eps: f64, t: f64) -> Result<TumorState, OdeError> {
        if !(c0 > 0.0 && c0.is_finite()) || !(0.0..=1.0).contains(&eps) {
            return Err(OdeError::InvalidInput { c0, eps });
        }
        self.advance(eps, TumorState { c: c0, k: self.k0 }, t, 0.0)
    }
}

fn state_ln(c: f64) -> f64 {
    c.max(f64::MIN_POSITIVE).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::RngStream;
    use rand::Rng;

    #[test]
    fn at_carrying_capacity_the_log_term_vanishes() {
        let ode = TumorOde::default();
        let (dc, dk) = ode.rates(0.0, 700.0, 700.0);
        assert_eq!(dc, 0.0);
        assert!((dk - (PHI * 700.0 - PSI * 700.0 * 700f64.powf(2.0 / 3.0))).abs() < 1e-9);
        let (dc, _) = ode.rates(0.3, 700.0, 700.0);
        assert!((dc + 0.3 * 700.0).abs() < 1e-12);
    }

    #[test]
    fn halving_the_step_barely_moves_the_horizon_value() {
        let base = TumorOde::default();
        let fine = TumorOde { step: 0.025, ..base };
        let mut rng = RngStream::new(11, 0);
        for _ in 0..100 {
            let c0 = rng.random_range(200.0..900.0);
            let eps = rng.random_range(0.0..1.0);
            let a = base.simulate(c0, eps, &[100.0]).unwrap()[0];
            let b = fine.simulate(c0, eps, &[100.0]).unwrap()[0];
            assert!((a - b).abs() <= 1e-6 * b.abs(), "c0={c0} eps={eps}: {a} vs {b}");
        }
    }

    #[test]
    fn global_error_is_fourth_order() {
        let plain = TumorOde { monitor: false, ..TumorOde::default() };
        let reference = TumorOde { step: 1e-3, ..plain }.simulate(500.0, 0.3, &[10.0]).unwrap()[0];
        let steps = [0.5, 0.25, 0.125, 0.0625];
        let errs: Vec<f64> = steps
            .iter()
            .map(|h| (TumorOde { step: *h, ..plain }.simulate(500.0, 0.3, &[10.0]).unwrap()[0] - reference).abs())
            .collect();
        let (lx, ly): (Vec<f64>, Vec<f64>) = steps.iter().zip(&errs).map(|(h, e)| (h.ln(), e.ln())).unzip();
        let mx = lx.iter().sum::<f64>() / 4.0;
        let my = ly.iter().sum::<f64>() / 4.0;
        let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope - 4.0).abs() < 0.3, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn multi_time_output_matches_separate_runs() {
        let ode = TumorOde::default();
        let both = ode.simulate(480.0, 0.2, &[5.0, 100.0]).unwrap();
        assert_eq!(both[0], ode.simulate(480.0, 0.2, &[5.0]).unwrap()[0]);
        let s5 = ode.state_at(480.0, 0.2, 5.0).unwrap();
        assert_eq!(ode.resume(s5, 0.2, 5.0, 100.0).unwrap().c, both[1]);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let ode = TumorOde::default();
        assert!(matches!(ode.simulate(-1.0, 0.2, &[1.0]), Err(OdeError::InvalidInput { .. })));
        assert!(matches!(ode.simulate(1.0, 1.2, &[1.0]), Err(OdeError::InvalidInput { .. })));
        assert_eq!(ode.simulate(1.0, 0.2, &[5.0, 1.0]), Err(OdeError::BadTimes));
    }

    #[test]
    fn refinement_cap_surfaces_as_error() {
        let ode = TumorOde { step: 5.0, tolerance: 1e-14, max_refine: 1, ..TumorOde::default() };
        assert!(matches!(ode.simulate(500.0, 0.5, &[20.0]), Err(OdeError::Unstable { .. })));
    }

    #[test]
    fn size_stays_positive_and_treatment_shrinks_it() {
        let ode = TumorOde::default();
        let mut violations = Vec::new();
        for c0 in [100.0, 300.0, 500.0, 700.0, 900.0] {
            let mut prev = f64::INFINITY;
            for i in 0..=20 {
                let eps = i as f64 / 20.0;
                let c = ode.simulate(c0, eps, &[100.0]).unwrap()[0];
                assert!(c > 0.0);
                if c > prev {
                    violations.push((c0, eps, c, prev));
                }
                prev = c;
            }
        }
        assert!(violations.is_empty(), "non-monotone in eps: {violations:?}");
    }
}
