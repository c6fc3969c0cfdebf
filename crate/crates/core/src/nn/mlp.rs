//! Fully connected conditioner networks.

use super::tape::{apply_head, Head, Tape, Var};
use super::NnError;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Clone, Copy, Debug)]
struct Layer {
    w: usize,
    b: usize,
    rows: usize,
    cols: usize,
}

/// Parameters live in one flat vector so a tape can borrow them whole.
/// Layout per layer: row-major weights then bias.
#[derive(Clone, Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    heads: Vec<Head>,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`; weights drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, heads: &[Head], rng: &mut R) -> Result<Self, NnError> {
        let mut net = Self::zeros(sizes, activation, heads)?;
        for layer in net.layers.clone() {
            let bound = 1.0 / (layer.cols.max(1) as f64).sqrt();
            for w in &mut net.params[layer.w..layer.w + layer.rows * layer.cols] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], activation: Activation, heads: &[Head]) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes[1..].contains(&0) {
            return Err(NnError::Shape { op: "mlp", left: sizes.len(), right: 2 });
        }
        let out = *sizes.last().unwrap();
        if heads.len() != out {
            return Err(NnError::Shape { op: "mlp heads", left: heads.len(), right: out });
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        let mut n = 0;
        for pair in sizes.windows(2) {
            let (cols, rows) = (pair[0], pair[1]);
            layers.push(Layer { w: n, b: n + rows * cols, rows, cols });
            n += rows * cols + rows;
        }
        Ok(Mlp { sizes: sizes.to_vec(), activation, heads: heads.to_vec(), layers, params: vec![0.0; n] })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Overwrites the final-layer bias (pre-head values).
    pub fn set_output_bias(&mut self, bias: &[f64]) -> Result<(), NnError> {
        let last = *self.layers.last().unwrap();
        if bias.len() != last.rows {
            return Err(NnError::Shape { op: "output bias", left: bias.len(), right: last.rows });
        }
        self.params[last.b..last.b + last.rows].copy_from_slice(bias);
        Ok(())
    }

    /// Scales the final-layer weights, so the network starts close to its
    /// output bias.
    pub fn scale_output_weights(&mut self, factor: f64) {
        let last = *self.layers.last().unwrap();
        for w in &mut self.params[last.w..last.b] {
            *w *= factor;
        }
    }

    fn check_input(&self, len: usize) -> Result<(), NnError> {
        if len != self.sizes[0] {
            return Err(NnError::Shape { op: "mlp input", left: len, right: self.sizes[0] });
        }
        Ok(())
    }

    /// Records the network on a tape created over `self.params()`
    /// (or over a larger slice holding them at `param_offset`).
    pub fn forward(&self, tape: &mut Tape, input: Var, param_offset: usize) -> Result<Var, NnError> {
        self.check_input(tape.value(input).len())?;
        let mut h = input;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = tape.param(param_offset + layer.w, layer.rows * layer.cols)?;
            let b = tape.param(param_offset + layer.b, layer.rows)?;
            h = tape.affine(w, h, b)?;
            if i + 1 < self.layers.len() {
                h = match self.activation {
                    Activation::Tanh => tape.tanh(h),
                    Activation::Relu => tape.relu(h),
                };
            }
        }
        tape.heads(h, &self.heads)
    }

    /// Same computation without a tape.
    pub fn forward_values(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input.len())?;
        let mut h = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let w = &self.params[layer.w..layer.w + layer.rows * layer.cols];
            let b = &self.params[layer.b..layer.b + layer.rows];
            let hidden = i + 1 < self.layers.len();
            h = (0..layer.rows)
                .map(|r| {
                    let a = b[r] + w[r * layer.cols..(r + 1) * layer.cols].iter().zip(&h).map(|(x, y)| x * y).sum::<f64>();
                    match (hidden, self.activation) {
                        (false, _) => a,
                        (true, Activation::Tanh) => a.tanh(),
                        (true, Activation::Relu) => a.max(0.0),
                    }
                })
                .collect();
        }
        Ok(h.iter().zip(&self.heads).map(|(v, hd)| apply_head(*hd, *v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::RngStream;

    #[test]
    fn zero_net_outputs_heads_of_bias() {
        let mut net = Mlp::zeros(&[2, 4, 3], Activation::Tanh, &[Head::Identity, Head::Softplus, Head::Sigmoid]).unwrap();
        let out = net.forward_values(&[1.0, -7.0]).unwrap();
        assert_eq!(out, vec![0.0, std::f64::consts::LN_2, 0.5]);
        net.set_output_bias(&[1.5, -2.0, 3.0]).unwrap();
        let out = net.forward_values(&[0.3, 0.3]).unwrap();
        assert_eq!(out[0], 1.5);
        assert!((out[1] - (1.0f64 + (-2.0f64).exp()).ln()).abs() < 1e-15);
        assert!((out[2] - 1.0 / (1.0 + (-3.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn single_layer_is_matrix_vector_product() {
        // W is 2x3 with inputs of length 3; here `sizes = [3, 2]`.
        let mut net = Mlp::zeros(&[3, 2], Activation::Tanh, &[Head::Identity; 2]).unwrap();
        let w = [1.0, 2.0, 3.0, -1.0, 0.5, 4.0];
        let b = [0.25, -0.75];
        net.params_mut()[..6].copy_from_slice(&w);
        net.params_mut()[6..].copy_from_slice(&b);
        let x = [0.5, -1.0, 2.0];
        let mut expected = [0.0; 2];
        for r in 0..2 {
            expected[r] = b[r];
            for c in 0..3 {
                expected[r] += w[r * 3 + c] * x[c];
            }
        }
        assert_eq!(net.forward_values(&x).unwrap(), expected.to_vec());
        let mut tape = Tape::new(net.params());
        let input = tape.leaf(&x);
        let out = net.forward(&mut tape, input, 0).unwrap();
        assert_eq!(tape.value(out), &expected);
    }

    #[test]
    fn head_ranges_hold() {
        let mut rng = RngStream::new(5, 0);
        let net = Mlp::new(&[2, 16, 2], Activation::Relu, &[Head::Softplus, Head::Sigmoid], &mut rng).unwrap();
        for i in 0..200 {
            let x = [i as f64 * 0.37 - 30.0, 12.0 - i as f64 * 0.11];
            let out = net.forward_values(&x).unwrap();
            assert!(out[0] > 0.0);
            assert!(out[1] > 0.0 && out[1] < 1.0);
        }
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let net = Mlp::zeros(&[2, 2], Activation::Tanh, &[Head::Identity; 2]).unwrap();
        assert!(matches!(net.forward_values(&[1.0]), Err(NnError::Shape { .. })));
    }

    #[test]
    fn tape_and_plain_forward_agree_bitwise() {
        let mut rng = RngStream::new(9, 1);
        let net = Mlp::new(&[3, 8, 8, 2], Activation::Tanh, &[Head::Identity, Head::Softplus], &mut rng).unwrap();
        let x = [0.2, -0.4, 1.1];
        let plain = net.forward_values(&x).unwrap();
        let mut tape = Tape::new(net.params());
        let input = tape.leaf(&x);
        let out = net.forward(&mut tape, input, 0).unwrap();
        assert_eq!(tape.value(out), plain.as_slice());
        assert_eq!(net.forward_values(&x).unwrap(), plain);
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = RngStream::new(21, 0);
        let mut net = Mlp::new(&[2, 6, 6, 2], Activation::Tanh, &[Head::Identity, Head::Softplus], &mut rng).unwrap();
        let h = 1e-5;
        let loss = |net: &Mlp, x: &[f64]| {
            let o = net.forward_values(x).unwrap();
            o[0] * o[0] - 2.0 * o[1].ln()
        };
        let mut worst: f64 = 0.0;
        for probe in 0..10 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let mut tape = Tape::new(net.params());
            let input = tape.leaf(&x);
            let out = net.forward(&mut tape, input, 0).unwrap();
            let a = tape.index(out, 0).unwrap();
            let b = tape.index(out, 1).unwrap();
            let a2 = tape.square(a);
            let lb = tape.ln(b);
            let lb = tape.scale(lb, 2.0);
            let l = tape.sub(a2, lb).unwrap();
            let grads = tape.backward(l).unwrap().into_params();
            for k in (probe..net.n_params()).step_by(7) {
                let orig = net.params()[k];
                net.params_mut()[k] = orig + h;
                let up = loss(&net, &x);
                net.params_mut()[k] = orig - h;
                let down = loss(&net, &x);
                net.params_mut()[k] = orig;
                let fd = (up - down) / (2.0 * h);
                let rel = (grads[k] - fd).abs() / grads[k].abs().max(fd.abs()).max(1e-4);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-5, "worst relative error {worst}");
    }
}
