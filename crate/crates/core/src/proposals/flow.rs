//! Radial flow layers `x = z + beta (z - z0) / (alpha + |z - z0|)`.
//!
//! Invertible whenever `beta >= -alpha`; the conditioner guarantees this by
//! emitting `beta = -alpha + s` with `s >= 0`.

use crate::nn::{softplus, Tape, Var};
use crate::prob::{DensityError, Distribution, RngStream, LN_2PI};
use rand_distr::{Distribution as _, StandardNormal};

const INVERT_ITERS: usize = 100;
const INVERT_TOL: f64 = 1e-10;

/// `beta = -alpha + softplus(beta_hat)`, so `beta >= -alpha` always.
pub fn constrained_beta(alpha: f64, beta_hat: f64) -> f64 {
    -alpha + softplus(beta_hat)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialLayer {
    pub center: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

fn radius(z: &[f64], center: &[f64]) -> f64 {
    z.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

impl RadialLayer {
    pub fn forward(&self, z: &[f64], out: &mut [f64]) {
        let r = radius(z, &self.center);
        let coef = self.beta / (self.alpha + r);
        for i in 0..z.len() {
            out[i] = z[i] + coef * (z[i] - self.center[i]);
        }
    }

    /// `ln |det dx/dz|` at `z`.
    pub fn log_det(&self, z: &[f64]) -> f64 {
        let d = z.len() as f64;
        let r = radius(z, &self.center);
        let denom = self.alpha + r;
        (d - 1.0) * (1.0 + self.beta / denom).ln() + (1.0 + self.beta * self.alpha / (denom * denom)).ln()
    }

    /// Radius equation `r (1 + beta / (alpha + r)) = r_x`, solved by
    /// Newton steps safeguarded by a bisection bracket.
    fn solve_radius(&self, rx: f64) -> Result<f64, DensityError> {
        let (a, b) = (self.alpha, self.beta);
        let g = |r: f64| r + b * r / (a + r) - rx;
        let dg = |r: f64| 1.0 + b * a / ((a + r) * (a + r));
        let mut lo = 0.0;
        let mut hi = rx * (1.0 + b.abs() / a);
        let mut grow = 0;
        while g(hi) < 0.0 {
            hi = 2.0 * hi + a;
            grow += 1;
            if grow > 200 {
                return Err(DensityError::Inversion { residual: g(hi).abs() });
            }
        }
        let tol = INVERT_TOL * rx.max(1.0);
        let mut r = rx.clamp(lo, hi);
        for _ in 0..INVERT_ITERS {
            let gr = g(r);
            if gr.abs() <= tol {
                return Ok(r);
            }
            if gr < 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            let step = r - gr / dg(r);
            r = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
            if hi - lo <= f64::EPSILON * hi.max(1.0) {
                break;
            }
        }
        let residual = g(r).abs();
        if residual <= tol * 10.0 {
            Ok(r)
        } else {
            Err(DensityError::Inversion { residual })
        }
    }

    pub fn inverse(&self, x: &[f64], out: &mut [f64]) -> Result<(), DensityError> {
        let rx = radius(x, &self.center);
        if rx == 0.0 {
            out.copy_from_slice(&self.center);
            return Ok(());
        }
        let r = self.solve_radius(rx)?;
        let ratio = r / rx;
        for i in 0..x.len() {
            out[i] = self.center[i] + (x[i] - self.center[i]) * ratio;
        }
        Ok(())
    }

    /// Constants `(1/a, c, d)` with `J^{-1} v = v/a - c d (d . v)` at `z`.
    fn inverse_jacobian(&self, z: &[f64]) -> (f64, f64, Vec<f64>) {
        let d: Vec<f64> = z.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = 1.0 / (self.alpha + r);
        let a = 1.0 + self.beta * h;
        let c = if r > 0.0 {
            let b = -self.beta * h * h / r;
            b / (a * (a + b * r * r))
        } else {
            0.0
        };
        (1.0 / a, c, d)
    }
}

/// Radial layers followed by an optional elementwise affine map.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialFlow {
    pub layers: Vec<RadialLayer>,
    pub loc: Vec<f64>,
    pub scale: Vec<f64>,
}

impl RadialFlow {
    pub fn identity(dim: usize, layers: usize) -> Self {
        let layer = RadialLayer { center: vec![0.0; dim], alpha: 1.0, beta: 0.0 };
        RadialFlow { layers: vec![layer; layers], loc: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    /// Pushes a base point through the flow; returns the total log-det.
    pub fn forward(&self, z: &[f64], out: &mut [f64]) -> f64 {
        let mut cur = z.to_vec();
        let mut next = vec![0.0; z.len()];
        let mut log_det = 0.0;
        for layer in &self.layers {
            log_det += layer.log_det(&cur);
            layer.forward(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        for i in 0..z.len() {
            out[i] = self.loc[i] + self.scale[i] * cur[i];
            log_det += self.scale[i].ln();
        }
        log_det
    }

    /// Base point for `x`, plus the total log-det of the forward map there.
    pub fn inverse(&self, x: &[f64]) -> Result<(Vec<f64>, f64), DensityError> {
        let mut cur: Vec<f64> = (0..x.len()).map(|i| (x[i] - self.loc[i]) / self.scale[i]).collect();
        let mut log_det: f64 = self.scale.iter().map(|s| s.ln()).sum();
        let mut prev = vec![0.0; x.len()];
        for layer in self.layers.iter().rev() {
            layer.inverse(&cur, &mut prev)?;
            log_det += layer.log_det(&prev);
            std::mem::swap(&mut cur, &mut prev);
        }
        Ok((cur, log_det))
    }
}

fn base_log_pdf(z: &[f64]) -> f64 {
    -0.5 * z.iter().map(|v| v * v).sum::<f64>() - 0.5 * LN_2PI * z.len() as f64
}

impl Distribution for RadialFlow {
    fn dim(&self) -> usize {
        self.loc.len()
    }

    fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) -> f64 {
        let z: Vec<f64> = (0..out.len()).map(|_| StandardNormal.sample(rng)).collect();
        let log_det = self.forward(&z, out);
        base_log_pdf(&z) - log_det
    }

    fn log_density(&self, x: &[f64]) -> Result<f64, DensityError> {
        if x.len() != self.dim() {
            return Err(crate::prob::ProbError::DimensionMismatch { expected: self.dim(), got: x.len() }.into());
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Ok(f64::NEG_INFINITY);
        }
        let (z, log_det) = self.inverse(x)?;
        Ok(base_log_pdf(&z) - log_det)
    }
}

/// Tape handles for one radial layer's conditioned parameters.
pub(crate) struct LayerVars {
    pub center: Var,
    pub alpha: Var,
    pub beta: Var,
}

fn tape_radius(tape: &mut Tape, z: Var, center: Var) -> Result<(Var, Var), crate::nn::NnError> {
    let d = tape.sub(z, center)?;
    let sq = tape.square(d);
    let s = tape.sum(sq);
    Ok((d, tape.sqrt(s)))
}

pub(crate) fn tape_forward(tape: &mut Tape, z: Var, p: &LayerVars) -> Result<Var, crate::nn::NnError> {
    let (d, r) = tape_radius(tape, z, p.center)?;
    let denom = tape.add(p.alpha, r)?;
    let coef = tape.div(p.beta, denom)?;
    let shift = tape.mul(coef, d)?;
    tape.add(z, shift)
}

pub(crate) fn tape_log_det(tape: &mut Tape, z: Var, p: &LayerVars, dim: usize) -> Result<Var, crate::nn::NnError> {
    let (_, r) = tape_radius(tape, z, p.center)?;
    let denom = tape.add(p.alpha, r)?;
    let q = tape.div(p.beta, denom)?;
    let t2 = {
        let ab = tape.mul(p.beta, p.alpha)?;
        let d2 = tape.square(denom);
        let v = tape.div(ab, d2)?;
        tape.ln_1p(v)
    };
    if dim == 1 {
        return Ok(t2);
    }
    let t1 = tape.ln_1p(q);
    let t1 = tape.scale(t1, (dim - 1) as f64);
    tape.add(t1, t2)
}

/// Records `z = f^{-1}(x)` for one layer with exact first-order
/// sensitivity: the numerical root `z*` enters as a constant and one
/// implicit Newton correction `z* - J^{-1}(f(z*) - x)` carries the
/// gradient with respect to both `x` and the layer parameters.
pub(crate) fn tape_inverse(
    tape: &mut Tape,
    x: Var,
    p: &LayerVars,
    layer: &RadialLayer,
) -> Result<Var, super::ProposalError> {
    let xv = tape.value(x).to_vec();
    let mut z_star = vec![0.0; xv.len()];
    layer.inverse(&xv, &mut z_star)?;
    let zl = tape.leaf(&z_star);
    let fz = tape_forward(tape, zl, p)?;
    let res = tape.sub(fz, x)?;
    let (inv_a, c, d) = layer.inverse_jacobian(&z_star);
    let t1 = tape.scale(res, inv_a);
    let dl = tape.leaf(&d);
    let proj = tape.dot(dl, res)?;
    let t2 = tape.mul(dl, proj)?;
    let t2 = tape.scale(t2, c);
    let step = tape.sub(t1, t2)?;
    Ok(tape.sub(zl, step)?)
}

pub(crate) fn tape_base_log_pdf(tape: &mut Tape, z: Var) -> Var {
    let dim = tape.value(z).len();
    let sq = tape.square(z);
    let s = tape.sum(sq);
    let s = tape.scale(s, -0.5);
    tape.offset(s, -0.5 * LN_2PI * dim as f64)
}
