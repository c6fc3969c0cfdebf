//! Tumor-treatment model: `x = (c0, eps)`, `y = (c'_0, c'_5)`,
//! `f(x) = loss(c_100)`, no target parameters.

use super::ode::{TumorOde, TumorState};
use super::{Evaluation, GroundTruth, JointSample, Model, ModelError, TruthMethod};
use crate::prob::{Density, RngStream};
use crate::quadrature::gauss_legendre;

pub const OBS_TIME: f64 = 5.0;
pub const HORIZON: f64 = 100.0;
const OBS_SCALE: f64 = 1e4;
const LOSS_FLOOR: f64 = 1e-8;
/// Oracle samples whose combined weight is below this fraction of the total
/// are not simulated to the horizon.
const PRUNE_FRACTION: f64 = 1e-12;
const JACKKNIFE_BLOCKS: usize = 20;
const PILOT_DRAWS: usize = 20_000;
const PILOT_MIN_ESS: f64 = 50.0;
/// Half-width of the quadrature box in posterior standard deviations.
const BOX_HALF_WIDTH: f64 = 12.0;

/// Treatment loss of a final tumor size; strictly inside `(1e-8, 1 - 1e-8)`.
pub fn cancer_loss(c: f64) -> f64 {
    (1.0 - 2.0 * LOSS_FLOOR) / 2.0 * ((-(c - 300.0) / 150.0).tanh() + 1.0) + LOSS_FLOOR
}

#[derive(Clone, Debug)]
pub struct CancerModel {
    ode: TumorOde,
    c0_prior: Density,
    eps_prior: Density,
}

impl Default for CancerModel {
    fn default() -> Self {
        Self::new(TumorOde::default())
    }
}

impl CancerModel {
    pub fn new(ode: TumorOde) -> Self {
        CancerModel {
            ode,
            c0_prior: Density::gamma(25.0, 20.0).expect("valid constants"),
            eps_prior: Density::beta(5.0, 10.0).expect("valid constants"),
        }
    }

    pub fn ode(&self) -> &TumorOde {
        &self.ode
    }

    /// `Gamma(shape = c^2 / 1e4, scale = c / 1e4)`.
    pub fn observation_density(c: f64) -> Result<Density, ModelError> {
        Ok(Density::gamma(c * c / OBS_SCALE, c / OBS_SCALE)?)
    }

    fn obs_log_lik(obs: f64, c: f64) -> f64 {
        match Self::observation_density(c) {
            Ok(d) => d.log_pdf(&[obs]).unwrap_or(f64::NEG_INFINITY),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn in_support(x: &[f64]) -> bool {
        x[0] > 0.0 && x[0].is_finite() && (0.0..=1.0).contains(&x[1])
    }

    fn check(&self, x: &[f64], y: &[f64]) -> Result<(), ModelError> {
        if x.len() != 2 {
            return Err(ModelError::Shape { what: "latent", expected: 2, got: x.len() });
        }
        if y.len() != 2 {
            return Err(ModelError::Shape { what: "observation", expected: 2, got: y.len() });
        }
        Ok(())
    }

    /// Self-normalized importance sampling with the prior as proposal and
    /// a blocked jackknife standard error. Simulation to the horizon is
    /// skipped for the lowest-weight draws whose combined weight is below
    /// `1e-12` of the total; they enter with `f = 1/2`, and half their
    /// weight fraction is added to the standard error as a bias bound.
    pub fn snis_truth(&self, y: &[f64], samples: u64, rng: &mut RngStream) -> Result<GroundTruth, ModelError> {
        if y.len() != 2 {
            return Err(ModelError::Shape { what: "observation", expected: 2, got: y.len() });
        }
        if samples < JACKKNIFE_BLOCKS as u64 {
            return Err(ModelError::Oracle(format!("need at least {JACKKNIFE_BLOCKS} oracle samples")));
        }
        let n = samples as usize;
        let mut eps = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n);
        let mut lw = Vec::with_capacity(n);
        for _ in 0..n {
            let c0 = self.c0_prior.sample(rng)[0];
            let e = self.eps_prior.sample(rng)[0];
            let s5 = self.ode.state_at(c0, e, OBS_TIME)?;
            lw.push(Self::obs_log_lik(y[0], c0) + Self::obs_log_lik(y[1], s5.c));
            eps.push(e);
            states.push(s5);
        }
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(ModelError::Oracle(format!("all prior draws have zero likelihood for y={y:?}")));
        }
        let w: Vec<f64> = lw.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| w[*b].total_cmp(&w[*a]).then(a.cmp(b)));
        let mut f = vec![0.5; n];
        let mut remaining = total;
        for &i in &order {
            if remaining <= PRUNE_FRACTION * total {
                break;
            }
            let end: TumorState = self.ode.resume(states[i], eps[i], OBS_TIME, HORIZON)?;
            f[i] = cancer_loss(end.c);
            remaining -= w[i];
        }
        let (mut num, mut den) = (vec![0.0; JACKKNIFE_BLOCKS], vec![0.0; JACKKNIFE_BLOCKS]);
        for i in 0..n {
            let b = i * JACKKNIFE_BLOCKS / n;
            num[b] += w[i] * f[i];
            den[b] += w[i];
        }
        let (num_t, den_t): (f64, f64) = (num.iter().sum(), den.iter().sum());
        let value = num_t / den_t;
        let g = JACKKNIFE_BLOCKS as f64;
        let loo: Vec<f64> = (0..JACKKNIFE_BLOCKS).map(|b| (num_t - num[b]) / (den_t - den[b])).collect();
        let loo_mean = loo.iter().sum::<f64>() / g;
        // pruned draws carry f = 1/2, so the value can be off by half their mass
        let prune_bias = 0.5 * remaining.max(0.0) / total;
        let std_error = ((g - 1.0) / g * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>()).sqrt() + prune_bias;
        let abs_dev = (0..n).map(|i| w[i] * (f[i] - value).abs()).sum::<f64>() / den_t;
        Ok(GroundTruth { value, std_error, method: TruthMethod::SnisOracle, samples, abs_dev: Some(abs_dev) })
    }
}

/// Weighted mean and covariance of `(c0, eps)` under the posterior.
#[derive(Clone, Copy, Debug)]
struct Moments {
    mean: [f64; 2],
    var: [f64; 2],
    cov: f64,
}

impl CancerModel {
    fn pilot_moments(&self, y: &[f64], draws: usize, rng: &mut RngStream) -> Result<(Moments, f64), ModelError> {
        let mut pts = Vec::with_capacity(draws);
        let mut lw = Vec::with_capacity(draws);
        for _ in 0..draws {
            let x = self.sample_prior(rng);
            let c5 = self.ode.state_at(x[0], x[1], OBS_TIME)?.c;
            lw.push(Self::obs_log_lik(y[0], x[0]) + Self::obs_log_lik(y[1], c5));
            pts.push(x);
        }
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(ModelError::Oracle(format!("all pilot draws have zero likelihood for y={y:?}")));
        }
        let w: Vec<f64> = lw.iter().map(|l| (l - max).exp()).collect();
        let sw: f64 = w.iter().sum();
        let ess = sw * sw / w.iter().map(|v| v * v).sum::<f64>();
        let mut mean = [0.0; 2];
        for (p, wi) in pts.iter().zip(&w) {
            mean[0] += wi * p[0] / sw;
            mean[1] += wi * p[1] / sw;
        }
        let (mut var, mut cov) = ([0.0; 2], 0.0);
        for (p, wi) in pts.iter().zip(&w) {
            let (d0, d1) = (p[0] - mean[0], p[1] - mean[1]);
            var[0] += wi * d0 * d0 / sw;
            var[1] += wi * d1 * d1 / sw;
            cov += wi * d0 * d1 / sw;
        }
        Ok((Moments { mean, var, cov }, ess))
    }

    /// Tensor Gauss–Legendre rule of `order` nodes per axis over a box in
    /// sheared coordinates `c0 = m0 + s0 u`, `eps = m1 + b (c0 - m0) + s1 v`
    /// fitted to pilot posterior moments. Returns `(mu, E|f - mu|)`.
    fn grid_estimate(&self, y: &[f64], m: &Moments, order: usize) -> Result<(f64, f64), ModelError> {
        let (nodes, weights) = gauss_legendre(order);
        let s0 = m.var[0].sqrt();
        let slope = m.cov / m.var[0];
        let s1 = (m.var[1] - slope * m.cov).max(m.var[1] * 1e-6).sqrt();
        let mut cells = Vec::with_capacity(order * order);
        for (u, wu) in nodes.iter().zip(&weights) {
            let c0 = m.mean[0] + s0 * BOX_HALF_WIDTH * u;
            for (v, wv) in nodes.iter().zip(&weights) {
                let eps = m.mean[1] + slope * (c0 - m.mean[0]) + s1 * BOX_HALF_WIDTH * v;
                let x = [c0, eps];
                let e = self.evaluate(&x, y, &[])?;
                cells.push((wu * wv, e.log_joint, e.f));
            }
        }
        let max = cells.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(ModelError::Oracle(format!("quadrature box misses the posterior for y={y:?}")));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (w, lj, f) in &cells {
            let p = w * (lj - max).exp();
            num += p * f;
            den += p;
        }
        let mu = num / den;
        let abs_dev = cells.iter().map(|(w, lj, f)| w * (lj - max).exp() * (f - mu).abs()).sum::<f64>() / den;
        Ok((mu, abs_dev))
    }

    /// Deterministic two-dimensional quadrature of `f p(x, y)` over
    /// `p(x, y)`. The box is placed by a prior-weighted pilot that only
    /// simulates to the observation time; the reported error is the
    /// difference between rules of `order` and `2 order / 3` nodes.
    pub fn quadrature_truth(&self, y: &[f64], order: usize, rng: &mut RngStream) -> Result<GroundTruth, ModelError> {
        if y.len() != 2 {
            return Err(ModelError::Shape { what: "observation", expected: 2, got: y.len() });
        }
        if order < 6 {
            return Err(ModelError::Oracle("quadrature order must be at least 6".into()));
        }
        let mut draws = PILOT_DRAWS;
        let moments = loop {
            let (m, ess) = self.pilot_moments(y, draws, rng)?;
            if ess >= PILOT_MIN_ESS {
                break m;
            }
            if draws >= 16 * PILOT_DRAWS {
                return Err(ModelError::Oracle(format!("pilot effective sample size {ess:.1} too small for y={y:?}")));
            }
            draws *= 4;
        };
        let (mu, abs_dev) = self.grid_estimate(y, &moments, order)?;
        let (coarse, _) = self.grid_estimate(y, &moments, 2 * order / 3)?;
        Ok(GroundTruth {
            value: mu,
            std_error: (mu - coarse).abs(),
            method: TruthMethod::Quadrature,
            samples: (order * order) as u64,
            abs_dev: Some(abs_dev),
        })
    }
}

impl Model for CancerModel {
    fn name(&self) -> &'static str {
        "cancer"
    }

    fn x_dim(&self) -> usize {
        2
    }

    fn y_dim(&self) -> usize {
        2
    }

    fn theta_dim(&self) -> usize {
        0
    }

    fn sample_theta(&self, _rng: &mut RngStream) -> Vec<f64> {
        Vec::new()
    }

    fn log_theta_prior(&self, _theta: &[f64]) -> f64 {
        0.0
    }

    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        vec![self.c0_prior.sample(rng)[0], self.eps_prior.sample(rng)[0]]
    }

    fn log_prior(&self, x: &[f64]) -> f64 {
        self.c0_prior.log_pdf(&x[..1]).unwrap_or(f64::NAN) + self.eps_prior.log_pdf(&x[1..2]).unwrap_or(f64::NAN)
    }

    fn sample_observation(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
        let c = self.ode.simulate(x[0], x[1], &[0.0, OBS_TIME])?;
        Ok(vec![Self::observation_density(c[0])?.sample(rng)[0], Self::observation_density(c[1])?.sample(rng)[0]])
    }

    fn sample_joint(&self, _theta: &[f64], rng: &mut RngStream) -> Result<JointSample, ModelError> {
        let x = self.sample_prior(rng);
        let c = self.ode.simulate(x[0], x[1], &[OBS_TIME, HORIZON])?;
        let y = vec![Self::observation_density(x[0])?.sample(rng)[0], Self::observation_density(c[0])?.sample(rng)[0]];
        Ok(JointSample { x, y, f: cancer_loss(c[1]) })
    }

    fn evaluate(&self, x: &[f64], y: &[f64], _theta: &[f64]) -> Result<Evaluation, ModelError> {
        self.check(x, y)?;
        if !Self::in_support(x) {
            return Ok(Evaluation { log_joint: f64::NEG_INFINITY, f: 0.0 });
        }
        let c = self.ode.simulate(x[0], x[1], &[OBS_TIME, HORIZON])?;
        let log_joint = self.log_prior(x) + Self::obs_log_lik(y[0], x[0]) + Self::obs_log_lik(y[1], c[0]);
        Ok(Evaluation { log_joint, f: cancer_loss(c[1]) })
    }

    fn target(&self, x: &[f64], _theta: &[f64]) -> Result<f64, ModelError> {
        if !Self::in_support(x) {
            return Ok(0.0);
        }
        Ok(cancer_loss(self.ode.simulate(x[0], x[1], &[HORIZON])?[0]))
    }
}
