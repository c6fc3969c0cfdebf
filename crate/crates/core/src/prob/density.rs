use super::special::{
    log_normal_interval, normal_cdf, normal_log_pdf, normal_sf, normal_sf_inv, LN2, LN_2PI,
};
use super::{logspace::lse_nonempty, ProbError, RngStream};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::erf::erf;
use statrs::function::gamma::{gamma_lr, ln_gamma};
use std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Normal,
    MultivariateNormal,
    HalfNormal,
    TruncatedNormal,
    Gamma,
    Beta,
    Uniform,
    Mixture,
}

/// A validated, immutable probability density.
///
/// Normal, HalfNormal, TruncatedNormal and Uniform are products of
/// independent coordinates; Gamma and Beta are one-dimensional. All
/// parameter checks happen in the constructors.
#[derive(Clone, Debug)]
pub struct Density {
    kind: Kind,
}

#[derive(Clone, Debug)]
enum Kind {
    Normal { mean: Vec<f64>, sd: Vec<f64> },
    Mvn(Box<Mvn>),
    HalfNormal { loc: Vec<f64>, scale: Vec<f64> },
    Truncated(Vec<TruncCoord>),
    Gamma { shape: f64, scale: f64, log_norm: f64 },
    Beta { a: f64, b: f64, log_norm: f64 },
    Uniform { low: Vec<f64>, high: Vec<f64>, log_vol: f64 },
    Mixture { components: Vec<Density>, log_weights: Vec<f64>, cumulative: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Mvn {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

#[derive(Clone, Debug)]
struct TruncCoord {
    mean: f64,
    sd: f64,
    a: f64,
    b: f64,
    log_mass: f64,
}

fn invalid(family: &'static str, reason: impl Into<String>) -> ProbError {
    ProbError::InvalidParameter { family, reason: reason.into() }
}

fn check_positive(family: &'static str, name: &str, v: &[f64]) -> Result<(), ProbError> {
    match v.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        Some(s) => Err(invalid(family, format!("{name} must be finite and positive, got {s}"))),
        None => Ok(()),
    }
}

fn check_finite(family: &'static str, name: &str, v: &[f64]) -> Result<(), ProbError> {
    match v.iter().find(|s| !s.is_finite()) {
        Some(s) => Err(invalid(family, format!("{name} must be finite, got {s}"))),
        None => Ok(()),
    }
}

fn check_len(family: &'static str, a: usize, b: usize) -> Result<(), ProbError> {
    if a != b || a == 0 {
        return Err(invalid(family, format!("parameter lengths {a} and {b} must agree and be non-zero")));
    }
    Ok(())
}

impl Density {
    pub fn normal(mean: f64, sd: f64) -> Result<Self, ProbError> {
        Self::diag_normal(vec![mean], vec![sd])
    }

    pub fn diag_normal(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self, ProbError> {
        check_len("Normal", mean.len(), sd.len())?;
        check_finite("Normal", "mean", &mean)?;
        check_positive("Normal", "sd", &sd)?;
        Ok(Density { kind: Kind::Normal { mean, sd } })
    }

    /// Multivariate normal; the Cholesky factor is computed once here.
    pub fn mvn(mean: Vec<f64>, cov: &DMatrix<f64>) -> Result<Self, ProbError> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d || d == 0 {
            return Err(invalid("MultivariateNormal", "covariance shape must match the mean"));
        }
        check_finite("MultivariateNormal", "mean", &mean)?;
        let asym = (cov - cov.transpose()).abs().max();
        if !(asym <= 1e-12 * cov.abs().max().max(1.0)) {
            return Err(invalid("MultivariateNormal", "covariance is not symmetric"));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| invalid("MultivariateNormal", "covariance is not positive definite"))?
            .l();
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * (d as f64 * LN_2PI + log_det);
        Ok(Density { kind: Kind::Mvn(Box::new(Mvn { mean: DVector::from_vec(mean), chol, log_norm })) })
    }

    /// Half-normal on `[loc, ∞)` per coordinate.
    pub fn half_normal(loc: Vec<f64>, scale: Vec<f64>) -> Result<Self, ProbError> {
        check_len("HalfNormal", loc.len(), scale.len())?;
        check_finite("HalfNormal", "loc", &loc)?;
        check_positive("HalfNormal", "scale", &scale)?;
        Ok(Density { kind: Kind::HalfNormal { loc, scale } })
    }

    pub fn truncated_normal(mean: f64, sd: f64, lower: f64, upper: f64) -> Result<Self, ProbError> {
        Self::truncated_normal_diag(&[mean], &[sd], &[lower], &[upper])
    }

    /// Independent truncated normals; bounds may be infinite.
    pub fn truncated_normal_diag(
        mean: &[f64],
        sd: &[f64],
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Self, ProbError> {
        const F: &str = "TruncatedNormal";
        check_len(F, mean.len(), sd.len())?;
        check_len(F, lower.len(), upper.len())?;
        check_len(F, mean.len(), lower.len())?;
        check_finite(F, "mean", mean)?;
        check_positive(F, "sd", sd)?;
        let mut coords = Vec::with_capacity(mean.len());
        for i in 0..mean.len() {
            if lower[i].is_nan() || upper[i].is_nan() || !(lower[i] < upper[i]) {
                return Err(invalid(F, format!("need lower < upper, got [{}, {}]", lower[i], upper[i])));
            }
            let a = (lower[i] - mean[i]) / sd[i];
            let b = (upper[i] - mean[i]) / sd[i];
            let log_mass = log_normal_interval(a, b);
            if log_mass == f64::NEG_INFINITY {
                return Err(invalid(F, "truncation interval carries no mass"));
            }
            coords.push(TruncCoord { mean: mean[i], sd: sd[i], a, b, log_mass });
        }
        Ok(Density { kind: Kind::Truncated(coords) })
    }

    /// Gamma with shape k and scale θ (mean kθ).
    pub fn gamma(shape: f64, scale: f64) -> Result<Self, ProbError> {
        check_positive("Gamma", "shape and scale", &[shape, scale])?;
        let log_norm = -ln_gamma(shape) - shape * scale.ln();
        Ok(Density { kind: Kind::Gamma { shape, scale, log_norm } })
    }

    pub fn beta(a: f64, b: f64) -> Result<Self, ProbError> {
        check_positive("Beta", "a and b", &[a, b])?;
        Ok(Density { kind: Kind::Beta { a, b, log_norm: -ln_beta(a, b) } })
    }

    pub fn uniform(low: Vec<f64>, high: Vec<f64>) -> Result<Self, ProbError> {
        check_len("Uniform", low.len(), high.len())?;
        check_finite("Uniform", "bounds", &low)?;
        check_finite("Uniform", "bounds", &high)?;
        if low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(invalid("Uniform", "need low < high in every coordinate"));
        }
        let log_vol = low.iter().zip(&high).map(|(l, h)| (h - l).ln()).sum();
        Ok(Density { kind: Kind::Uniform { low, high, log_vol } })
    }

    pub fn mixture(components: Vec<Density>, weights: &[f64]) -> Result<Self, ProbError> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(invalid("Mixture", "need one weight per component"));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(invalid("Mixture", "components must share a dimension"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("Mixture", "weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(invalid("Mixture", "weights sum to zero"));
        }
        let log_weights = weights.iter().map(|w| (w / total).ln()).collect();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(Density { kind: Kind::Mixture { components, log_weights, cumulative } })
    }

    pub fn family(&self) -> Family {
        match self.kind {
            Kind::Normal { .. } => Family::Normal,
            Kind::Mvn(_) => Family::MultivariateNormal,
            Kind::HalfNormal { .. } => Family::HalfNormal,
            Kind::Truncated(_) => Family::TruncatedNormal,
            Kind::Gamma { .. } => Family::Gamma,
            Kind::Beta { .. } => Family::Beta,
            Kind::Uniform { .. } => Family::Uniform,
            Kind::Mixture { .. } => Family::Mixture,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::Normal { mean, .. } => mean.len(),
            Kind::Mvn(m) => m.mean.len(),
            Kind::HalfNormal { loc, .. } => loc.len(),
            Kind::Truncated(c) => c.len(),
            Kind::Gamma { .. } | Kind::Beta { .. } => 1,
            Kind::Uniform { low, .. } => low.len(),
            Kind::Mixture { components, .. } => components[0].dim(),
        }
    }

    /// Log density; −∞ outside the support.
    pub fn log_pdf(&self, x: &[f64]) -> Result<f64, ProbError> {
        if x.len() != self.dim() {
            return Err(ProbError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.log_pdf_unchecked(x))
    }

    fn log_pdf_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Normal { mean, sd } => (0..x.len()).map(|i| normal_log_pdf(x[i], mean[i], sd[i])).sum(),
            Kind::Mvn(m) => {
                let diff = DVector::from_column_slice(x) - &m.mean;
                match m.chol.solve_lower_triangular(&diff) {
                    Some(z) => m.log_norm - 0.5 * z.norm_squared(),
                    None => f64::NAN,
                }
            }
            Kind::HalfNormal { loc, scale } => {
                let mut acc = 0.0;
                for i in 0..x.len() {
                    if !(x[i] >= loc[i]) {
                        return f64::NEG_INFINITY;
                    }
                    acc += LN2 + normal_log_pdf(x[i], loc[i], scale[i]);
                }
                acc
            }
            Kind::Truncated(coords) => {
                let mut acc = 0.0;
                for (xi, c) in x.iter().zip(coords) {
                    let z = (xi - c.mean) / c.sd;
                    if !(z >= c.a && z <= c.b) {
                        return f64::NEG_INFINITY;
                    }
                    acc += -0.5 * z * z - c.sd.ln() - 0.5 * LN_2PI - c.log_mass;
                }
                acc
            }
            Kind::Gamma { shape, scale, log_norm } => {
                let v = x[0];
                if !(v > 0.0) || v.is_infinite() {
                    return f64::NEG_INFINITY;
                }
                log_norm + (shape - 1.0) * v.ln() - v / scale
            }
            Kind::Beta { a, b, log_norm } => {
                let v = x[0];
                if !(v > 0.0 && v < 1.0) {
                    return f64::NEG_INFINITY;
                }
                log_norm + (a - 1.0) * v.ln() + (b - 1.0) * (-v).ln_1p()
            }
            Kind::Uniform { low, high, log_vol } => {
                if x.iter().zip(low.iter().zip(high)).all(|(v, (l, h))| v >= l && v <= h) {
                    -log_vol
                } else {
                    f64::NEG_INFINITY
                }
            }
            Kind::Mixture { components, log_weights, .. } => {
                let terms: Vec<f64> = components
                    .iter()
                    .zip(log_weights)
                    .map(|(c, lw)| lw + c.log_pdf_unchecked(x))
                    .collect();
                lse_nonempty(&terms)
            }
        }
    }

    /// Draw one point into `out` (length `dim()`).
    pub fn sample_to(&self, rng: &mut RngStream, out: &mut [f64]) {
        match &self.kind {
            Kind::Normal { mean, sd } => {
                for i in 0..out.len() {
                    let e: f64 = StandardNormal.sample(rng);
                    out[i] = mean[i] + sd[i] * e;
                }
            }
            Kind::Mvn(m) => {
                let eps = DVector::from_iterator(out.len(), (0..out.len()).map(|_| StandardNormal.sample(rng)));
                let v = &m.mean + &m.chol * eps;
                out.copy_from_slice(v.as_slice());
            }
            Kind::HalfNormal { loc, scale } => {
                for i in 0..out.len() {
                    let e: f64 = StandardNormal.sample(rng);
                    out[i] = loc[i] + scale[i] * e.abs();
                }
            }
            Kind::Truncated(coords) => {
                for (o, c) in out.iter_mut().zip(coords) {
                    *o = c.mean + c.sd * sample_truncated_std(c.a, c.b, rng);
                }
            }
            Kind::Gamma { shape, scale, .. } => {
                out[0] = rand_distr::Gamma::new(*shape, *scale).expect("validated").sample(rng);
            }
            Kind::Beta { a, b, .. } => {
                out[0] = rand_distr::Beta::new(*a, *b).expect("validated").sample(rng);
            }
            Kind::Uniform { low, high, .. } => {
                for i in 0..out.len() {
                    out[i] = low[i] + (high[i] - low[i]) * rng.random::<f64>();
                }
            }
            Kind::Mixture { components, cumulative, .. } => {
                let u: f64 = rng.random();
                let k = cumulative.iter().position(|c| u < *c).unwrap_or(components.len() - 1);
                components[k].sample_to(rng, out);
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_to(rng, &mut out);
        out
    }

    /// CDF of a one-dimensional density.
    pub fn cdf(&self, x: f64) -> Result<f64, ProbError> {
        if self.dim() != 1 {
            return Err(ProbError::Unsupported("cdf of a multivariate density"));
        }
        Ok(match &self.kind {
            Kind::Normal { mean, sd } => normal_cdf((x - mean[0]) / sd[0]),
            Kind::Mvn(m) => normal_cdf((x - m.mean[0]) / m.chol[(0, 0)]),
            Kind::HalfNormal { loc, scale } => {
                if x <= loc[0] {
                    0.0
                } else {
                    erf((x - loc[0]) / (scale[0] * SQRT_2))
                }
            }
            Kind::Truncated(c) => {
                let c = &c[0];
                let z = (x - c.mean) / c.sd;
                if z <= c.a {
                    0.0
                } else if z >= c.b {
                    1.0
                } else {
                    (log_normal_interval(c.a, z) - c.log_mass).exp()
                }
            }
            Kind::Gamma { shape, scale, .. } => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_lr(*shape, x / scale)
                }
            }
            Kind::Beta { a, b, .. } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(*a, *b, x)
                }
            }
            Kind::Uniform { low, high, .. } => ((x - low[0]) / (high[0] - low[0])).clamp(0.0, 1.0),
            Kind::Mixture { components, log_weights, .. } => {
                let mut acc = 0.0;
                for (c, lw) in components.iter().zip(log_weights) {
                    acc += lw.exp() * c.cdf(x)?;
                }
                acc
            }
        })
    }

    pub fn mean(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Normal { mean, .. } => mean.clone(),
            Kind::Mvn(m) => m.mean.as_slice().to_vec(),
            Kind::HalfNormal { loc, scale } => loc
                .iter()
                .zip(scale)
                .map(|(l, s)| l + s * (2.0 / std::f64::consts::PI).sqrt())
                .collect(),
            Kind::Truncated(coords) => coords
                .iter()
                .map(|c| {
                    let phi = |z: f64| if z.is_finite() { (-0.5 * z * z - 0.5 * LN_2PI).exp() } else { 0.0 };
                    c.mean + c.sd * (phi(c.a) - phi(c.b)) / c.log_mass.exp()
                })
                .collect(),
            Kind::Gamma { shape, scale, .. } => vec![shape * scale],
            Kind::Beta { a, b, .. } => vec![a / (a + b)],
            Kind::Uniform { low, high, .. } => low.iter().zip(high).map(|(l, h)| 0.5 * (l + h)).collect(),
            Kind::Mixture { components, log_weights, .. } => {
                let mut acc = vec![0.0; self.dim()];
                for (c, lw) in components.iter().zip(log_weights) {
                    for (a, m) in acc.iter_mut().zip(c.mean()) {
                        *a += lw.exp() * m;
                    }
                }
                acc
            }
        }
    }

    /// Support bounds of a one-dimensional density (possibly infinite).
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            Kind::HalfNormal { loc, .. } => (loc[0], f64::INFINITY),
            Kind::Truncated(c) => (c[0].mean + c[0].sd * c[0].a, c[0].mean + c[0].sd * c[0].b),
            Kind::Gamma { .. } => (0.0, f64::INFINITY),
            Kind::Beta { .. } => (0.0, 1.0),
            Kind::Uniform { low, high, .. } => (low[0], high[0]),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// Standard normal restricted to [a, b] by inverse CDF. Intervals in the
/// upper tail use the survival function so large lower bounds do not
/// cancel; beyond the range where erfc is representable an exact
/// exponential-rejection sampler takes over.
fn sample_truncated_std(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    if b <= 0.0 {
        return -sample_truncated_std(-b, -a, rng);
    }
    let u = rng.uniform_open();
    if a >= 0.0 {
        let sa = normal_sf(a);
        if sa < 1e-300 {
            return sample_far_tail(a, b, rng);
        }
        let sb = normal_sf(b);
        let p = sa - u * (sa - sb);
        normal_sf_inv(p).clamp(a, b)
    } else {
        let ca = normal_cdf(a);
        let cb = normal_cdf(b);
        let p = ca + u * (cb - ca);
        super::special::normal_quantile(p).clamp(a, b)
    }
}

fn sample_far_tail(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a - rng.uniform_open().ln() / rate;
        if z > b {
            continue;
        }
        let accept = (-0.5 * (z - rate) * (z - rate)).exp();
        if rng.uniform_open() <= accept {
            return z;
        }
    }
}
