use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{LN_2, SQRT_2};

/// ln(2π)
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal CDF Φ(z), evaluated through erfc so both tails keep
/// full relative precision.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Survival function 1 − Φ(z).
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// ln(1 − Φ(z)); switches to the asymptotic Mills-ratio series once erfc
/// underflows.
pub fn log_normal_sf(z: f64) -> f64 {
    if z < 30.0 {
        return normal_sf(z).ln();
    }
    let z2 = z * z;
    let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    -0.5 * z2 - z.ln() - 0.5 * LN_2PI + series.ln()
}

pub fn log_normal_cdf(z: f64) -> f64 {
    log_normal_sf(-z)
}

/// Φ⁻¹(p).
pub fn normal_quantile(p: f64) -> f64 {
    -normal_sf_inv(p)
}

/// Inverse of the survival function: z with 1 − Φ(z) = p. Accurate for
/// tiny p, where `normal_quantile(1 - p)` would cancel.
pub fn normal_sf_inv(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p <= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    // the upper half is solved by symmetry so the polished tail stays small
    if p > 0.5 {
        return -normal_sf_inv(1.0 - p);
    }
    let mut z = SQRT_2 * erfc_inv(2.0 * p);
    // Halley polish against the accurate survival function
    for _ in 0..2 {
        let err = normal_sf(z) - p;
        let pdf = (-0.5 * z * z - 0.5 * LN_2PI).exp();
        if pdf == 0.0 {
            break;
        }
        let u = -err / pdf;
        z -= u / (1.0 + 0.5 * z * u);
    }
    z
}

pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
}

/// ln of ∫_a^b φ, stable in both tails.
pub(crate) fn log_normal_interval(a: f64, b: f64) -> f64 {
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if a > 0.0 {
        let (la, lb) = (log_normal_sf(a), log_normal_sf(b));
        la + (-(lb - la).exp()).ln_1p()
    } else if b < 0.0 {
        log_normal_interval(-b, -a)
    } else {
        (-(normal_cdf(a) + normal_sf(b))).ln_1p()
    }
}

pub(crate) const LN2: f64 = LN_2;
