//! `x ~ N(0, S1)`, `y | x ~ N(x, S2)` with diagonal `S2`,
//! `f(x; θ) = prod_i 1{x_i > θ_i}`, `θ ~ U[0, u]^D`.

use super::{DataProposal, Evaluation, GroundTruth, JointSample, Model, ModelError, TruthMethod};
use crate::prob::{normal_log_pdf, normal_sf, Density, ProbError, RngStream};
use crate::quadrature::integrate;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};

const SIGMA1_5D: &str = include_str!("../../data/tail5d_sigma1.txt");

#[derive(Clone, Debug)]
pub struct TailModel {
    dim: usize,
    upper: f64,
    sigma1: DMatrix<f64>,
    sigma2: Vec<f64>,
    prior: Density,
    /// `S1 (S1 + S2)^{-1}`.
    gain: DMatrix<f64>,
    post_cov: DMatrix<f64>,
    evidence: Density,
}

/// Exact optimal proposals for the positive target.
#[derive(Clone, Debug)]
pub struct OracleProposals {
    /// Posterior truncated to the region where `f > 0`.
    pub q1_plus: Density,
    /// Absent: the indicator target is non-negative.
    pub q1_minus: Option<Density>,
    pub q2: Density,
}

fn parse_matrix(text: &str) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split_whitespace().map(|v| v.parse().expect("numeric matrix entry")).collect())
        .collect();
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

impl TailModel {
    pub fn new(sigma1: DMatrix<f64>, sigma2: Vec<f64>, upper: f64) -> Result<Self, ModelError> {
        let dim = sigma1.nrows();
        if sigma2.len() != dim {
            return Err(ModelError::Shape { what: "likelihood variances", expected: dim, got: sigma2.len() });
        }
        if !(upper > 0.0) || sigma2.iter().any(|v| !(*v > 0.0)) {
            return Err(ProbError::InvalidParameter { family: "tail model", reason: "non-positive scale".into() }.into());
        }
        let prior = Density::mvn(vec![0.0; dim], &sigma1)?;
        let s2 = DMatrix::from_diagonal(&DVector::from_column_slice(&sigma2));
        let total = &sigma1 + &s2;
        let total_inv = total.clone().try_inverse().ok_or_else(|| ModelError::Oracle("singular evidence covariance".into()))?;
        let gain = &sigma1 * &total_inv;
        // S1 - S1 (S1+S2)^{-1} S1, symmetrized against rounding.
        let cov = &sigma1 - &gain * &sigma1;
        let post_cov = (&cov + cov.transpose()) * 0.5;
        let evidence = Density::mvn(vec![0.0; dim], &total)?;
        Ok(TailModel { dim, upper, sigma1, sigma2, prior, gain, post_cov, evidence })
    }

    /// `S1 = S2 = 1`, `u = 5`.
    pub fn one_dim() -> Self {
        Self::new(DMatrix::from_element(1, 1, 1.0), vec![1.0], 5.0).expect("valid constants")
    }

    /// The shipped five-dimensional prior covariance, `S2 = I`, `u = 3`.
    pub fn five_dim() -> Self {
        Self::new(parse_matrix(SIGMA1_5D), vec![1.0; 5], 3.0).expect("valid constants")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn sigma1(&self) -> &DMatrix<f64> {
        &self.sigma1
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn posterior_cov(&self) -> &DMatrix<f64> {
        &self.post_cov
    }

    pub fn posterior_mean(&self, y: &[f64]) -> Vec<f64> {
        (&self.gain * DVector::from_column_slice(y)).as_slice().to_vec()
    }

    /// `prod_i P(x_i > theta_i)` under the prior marginals; correlations are
    /// ignored, so in several dimensions this is only a scale for `θ`.
    pub fn prior_tail_mass(&self, theta: &[f64]) -> f64 {
        theta.iter().enumerate().map(|(i, t)| normal_sf(t / self.sigma1[(i, i)].sqrt())).product()
    }

    /// `log p(y)`.
    pub fn log_evidence(&self, y: &[f64]) -> Result<f64, ModelError> {
        Ok(self.evidence.log_pdf(y)?)
    }

    pub fn posterior(&self, y: &[f64]) -> Result<Density, ModelError> {
        self.check_y(y)?;
        let mean = self.posterior_mean(y);
        if self.dim == 1 {
            Ok(Density::normal(mean[0], self.post_cov[(0, 0)].sqrt())?)
        } else {
            Ok(Density::mvn(mean, &self.post_cov)?)
        }
    }

    fn check_y(&self, y: &[f64]) -> Result<(), ModelError> {
        if y.len() != self.dim {
            return Err(ModelError::Shape { what: "observation", expected: self.dim, got: y.len() });
        }
        Ok(())
    }

    fn posterior_is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| i == j || self.post_cov[(i, j)] == 0.0))
    }

    /// Closed form from the conjugate posterior; one dimension, or any
    /// dimension with a diagonal posterior.
    pub fn analytic_truth(&self, y: &[f64], theta: &[f64]) -> Result<GroundTruth, ModelError> {
        self.check_y(y)?;
        if !self.posterior_is_diagonal() {
            return Err(ModelError::Unsupported("analytic truth with correlated posterior"));
        }
        let mean = self.posterior_mean(y);
        let value = (0..self.dim).map(|i| normal_sf((theta[i] - mean[i]) / self.post_cov[(i, i)].sqrt())).product();
        Ok(GroundTruth { value, std_error: 0.0, method: TruthMethod::Analytic, samples: 0, abs_dev: Some(2.0 * value * (1.0 - value)) })
    }

    /// Ratio of quadratures of `f p(x, y)` and `p(x, y)`; one dimension.
    pub fn quadrature_truth(&self, y: &[f64], theta: &[f64]) -> Result<GroundTruth, ModelError> {
        if self.dim != 1 {
            return Err(ModelError::Unsupported("quadrature truth beyond one dimension"));
        }
        self.check_y(y)?;
        // Work relative to the joint's peak so the integrands are O(1).
        let mode = self.posterior_mean(y)[0];
        let peak = self.log_joint_unchecked(&[mode], y);
        let g = |x: f64| (self.log_joint_unchecked(&[x], y) - peak).exp();
        let num = integrate(g, theta[0], f64::INFINITY, 0.0, 1e-12)?;
        let den = integrate(g, f64::NEG_INFINITY, f64::INFINITY, 0.0, 1e-12)?;
        let value = num.value / den.value;
        Ok(GroundTruth { value, std_error: 0.0, method: TruthMethod::Quadrature, samples: 0, abs_dev: Some(2.0 * value * (1.0 - value)) })
    }

    /// Importance sampling of the normalized posterior with proposal
    /// `HalfNormal(θ, diag S2)`, which covers exactly the region `f > 0`.
    pub fn sampled_truth(&self, y: &[f64], theta: &[f64], samples: u64, rng: &mut RngStream) -> Result<GroundTruth, ModelError> {
        self.check_y(y)?;
        if samples < 2 {
            return Err(ModelError::Oracle("need at least two oracle samples".into()));
        }
        let post = self.posterior(y)?;
        let sd: Vec<f64> = self.sigma2.iter().map(|v| v.sqrt()).collect();
        let hn = Density::half_normal(theta.to_vec(), sd)?;
        let shift = post.log_pdf(theta)? - hn.log_pdf(theta)?;
        let mut x = vec![0.0; self.dim];
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..samples {
            hn.sample_to(rng, &mut x);
            let w = (post.log_pdf(&x)? - hn.log_pdf(&x)? - shift).exp();
            sum += w;
            sum_sq += w * w;
        }
        let n = samples as f64;
        let mean = sum / n;
        let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
        let scale = shift.exp();
        let value = mean * scale;
        Ok(GroundTruth {
            value,
            std_error: (var / n).sqrt() * scale,
            method: TruthMethod::IsOracle,
            samples,
            abs_dev: Some(2.0 * value * (1.0 - value)),
        })
    }

    /// Analytic where possible, otherwise the sampling oracle.
    pub fn truth(&self, y: &[f64], theta: &[f64], samples: u64, rng: &mut RngStream) -> Result<GroundTruth, ModelError> {
        if self.posterior_is_diagonal() {
            self.analytic_truth(y, theta)
        } else {
            self.sampled_truth(y, theta, samples, rng)
        }
    }

    pub fn oracle_proposals(&self, y: &[f64], theta: &[f64]) -> Result<OracleProposals, ModelError> {
        if !self.posterior_is_diagonal() {
            return Err(ModelError::Unsupported("oracle proposals with correlated posterior"));
        }
        let mean = self.posterior_mean(y);
        let sd: Vec<f64> = (0..self.dim).map(|i| self.post_cov[(i, i)].sqrt()).collect();
        let q1_plus = Density::truncated_normal_diag(&mean, &sd, theta, &vec![f64::INFINITY; self.dim])?;
        let q2 = Density::diag_normal(mean, sd)?;
        Ok(OracleProposals { q1_plus, q1_minus: None, q2 })
    }

    pub fn half_normal_data_proposal(&self) -> HalfNormalDataProposal {
        HalfNormalDataProposal { upper: self.upper, sd: self.sigma2.iter().map(|v| v.sqrt()).collect() }
    }

    fn log_likelihood(&self, y: &[f64], x: &[f64]) -> f64 {
        (0..self.dim).map(|i| normal_log_pdf(y[i], x[i], self.sigma2[i].sqrt())).sum()
    }

    fn log_joint_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.prior.log_pdf(x).unwrap_or(f64::NAN) + self.log_likelihood(y, x)
    }

    fn indicator(x: &[f64], theta: &[f64]) -> f64 {
        if x.iter().zip(theta).all(|(a, b)| a > b) {
            1.0
        } else {
            0.0
        }
    }
}

impl Model for TailModel {
    fn name(&self) -> &'static str {
        if self.dim == 1 {
            "tail1d"
        } else {
            "tail"
        }
    }

    fn x_dim(&self) -> usize {
        self.dim
    }

    fn y_dim(&self) -> usize {
        self.dim
    }

    fn theta_dim(&self) -> usize {
        self.dim
    }

    fn sample_theta(&self, rng: &mut RngStream) -> Vec<f64> {
        (0..self.dim).map(|_| self.upper * rng.random::<f64>()).collect()
    }

    fn log_theta_prior(&self, theta: &[f64]) -> f64 {
        if theta.iter().all(|t| (0.0..=self.upper).contains(t)) {
            -(self.dim as f64) * self.upper.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        self.prior.sample(rng)
    }

    fn log_prior(&self, x: &[f64]) -> f64 {
        self.prior.log_pdf(x).unwrap_or(f64::NAN)
    }

    fn sample_observation(&self, x: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
        Ok((0..self.dim)
            .map(|i| {
                let e: f64 = StandardNormal.sample(rng);
                x[i] + self.sigma2[i].sqrt() * e
            })
            .collect())
    }

    fn sample_joint(&self, theta: &[f64], rng: &mut RngStream) -> Result<JointSample, ModelError> {
        let x = self.sample_prior(rng);
        let y = self.sample_observation(&x, rng)?;
        let f = Self::indicator(&x, theta);
        Ok(JointSample { x, y, f })
    }

    fn evaluate(&self, x: &[f64], y: &[f64], theta: &[f64]) -> Result<Evaluation, ModelError> {
        Ok(Evaluation { log_joint: self.log_joint_unchecked(x, y), f: Self::indicator(x, theta) })
    }

    fn target(&self, x: &[f64], theta: &[f64]) -> Result<f64, ModelError> {
        Ok(Self::indicator(x, theta))
    }
}

/// `q'(θ, x) = p(θ) HalfNormal(x; θ, diag S2)`.
#[derive(Clone, Debug)]
pub struct HalfNormalDataProposal {
    upper: f64,
    sd: Vec<f64>,
}

impl DataProposal for HalfNormalDataProposal {
    fn sample(&self, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>, f64) {
        let d = self.sd.len();
        let theta: Vec<f64> = (0..d).map(|_| self.upper * rng.random::<f64>()).collect();
        let mut lq = -(d as f64) * self.upper.ln();
        let mut x = vec![0.0; d];
        for i in 0..d {
            let e: f64 = StandardNormal.sample(rng);
            x[i] = theta[i] + self.sd[i] * e.abs();
            lq += std::f64::consts::LN_2 + normal_log_pdf(x[i], theta[i], self.sd[i]);
        }
        (theta, x, lq)
    }
}
