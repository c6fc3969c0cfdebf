//! Bias-corrected Adam and global-norm clipping.

use super::NnError;

#[derive(Clone, Debug)]
pub struct AdamState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState { step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params], lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Parameters are untouched on error.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Shape { op: "adam", left: grads.len(), right: self.m.len() });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NnError::Divergence { step: self.step + 1 });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Rescales `grads` so its Euclidean norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut st = AdamState::new(3, 0.1);
        let mut p = [1.0, -2.0, 3.0];
        st.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut st = AdamState::new(2, 0.01);
        let mut p = [0.0, 0.0];
        st.step(&mut p, &[3.0, -0.2]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut st = AdamState::new(1, 0.1);
        let mut w = [0.0];
        for _ in 0..200 {
            let g = [2.0 * (w[0] - 3.0)];
            st.step(&mut w, &g).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.1, "w = {}", w[0]);
    }

    #[test]
    fn non_finite_gradient_reports_step() {
        let mut st = AdamState::new(1, 0.1);
        let mut w = [0.0];
        st.step(&mut w, &[1.0]).unwrap();
        assert_eq!(st.step(&mut w, &[f64::NAN]), Err(NnError::Divergence { step: 2 }));
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = [3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 10.0), 5.0);
        assert_eq!(g, [3.0, 4.0]);
        clip_global_norm(&mut g, 1.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
