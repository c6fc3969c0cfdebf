use super::EstimatorError;

/// Replicate statistics of one estimator at one datapoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicateError {
    /// Mean of `δ̂ = (μ − μ̂)² / μ²` over replicates; the plain squared error
    /// when `relative` is false.
    pub delta: f64,
    /// Standard error of `delta` across replicates.
    pub delta_se: f64,
    pub delta_q25: f64,
    pub delta_q75: f64,
    pub mse: f64,
    /// False when the truth is zero and the statistics fell back to MSE.
    pub relative: bool,
    pub replicates: usize,
}

pub fn remse(estimates: &[f64], truth: f64) -> Result<ReplicateError, EstimatorError> {
    if estimates.len() < 2 {
        return Err(EstimatorError::InvalidArgument(format!("need at least 2 replicates, got {}", estimates.len())));
    }
    if !truth.is_finite() {
        return Err(EstimatorError::InvalidArgument(format!("truth {truth}")));
    }
    if let Some((index, &value)) = estimates.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(EstimatorError::InvalidValue { index, value });
    }
    let relative = truth != 0.0;
    let scale = if relative { truth * truth } else { 1.0 };
    let sq: Vec<f64> = estimates.iter().map(|e| (e - truth).powi(2)).collect();
    let mut delta: Vec<f64> = sq.iter().map(|s| s / scale).collect();
    let r = delta.len() as f64;
    let mean = delta.iter().sum::<f64>() / r;
    let var = delta.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (r - 1.0);
    delta.sort_by(f64::total_cmp);
    Ok(ReplicateError {
        delta: mean,
        delta_se: (var / r).sqrt(),
        delta_q25: quantile(&delta, 0.25),
        delta_q75: quantile(&delta, 0.75),
        mse: sq.iter().sum::<f64>() / r,
        relative,
        replicates: estimates.len(),
    })
}

/// Linearly interpolated quantile of ascending-sorted data; NaN when empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Lower bound `(E_{p(x|y)} |f − μ|)² / N` on the MSE of any SNIS estimator.
pub fn snis_optimal_bound(abs_dev: f64, n: usize) -> f64 {
    abs_dev * abs_dev / n as f64
}
