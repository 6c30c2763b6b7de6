//! Fully-connected network with hand-written backpropagation.
//!
//! Parameters live in one flat vector: for each layer, the weight matrix in
//! row-major order followed by the bias. Hidden layers use the configured
//! activation, the output layer is linear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Softplus,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
        }
    }

    /// Derivative at pre-activation z with activation value a.
    fn deriv(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
        }
    }
}

/// Stateless view binding a layer layout and activation to a flat parameter
/// slice.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MlpView<'a> {
    pub layers: &'a [usize],
    pub activation: Activation,
}

/// Forward-pass record kept for backpropagation.
pub(crate) struct Trace {
    /// acts[0] is the input, acts[L] the linear output.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("nonempty trace")
    }
}

impl<'a> MlpView<'a> {
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 || self.layers.contains(&0) {
            return Err(Error::InvalidValue(format!(
                "bad layer sizes {:?}",
                self.layers
            )));
        }
        Ok(())
    }

    pub fn param_dim(&self) -> usize {
        self.layers.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Trace {
        debug_assert_eq!(input.len(), self.layers[0]);
        let n_layers = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers);
        acts.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.layers.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[offset..offset + n_out * n_in];
            let biases = &params[offset + n_out * n_in..offset + n_out * (n_in + 1)];
            offset += n_out * (n_in + 1);
            let prev = &acts[l];
            let mut z = vec![0.0; n_out];
            for i in 0..n_out {
                let row = &weights[i * n_in..(i + 1) * n_in];
                let mut acc = biases[i];
                for (wij, xj) in row.iter().zip(prev) {
                    acc += wij * xj;
                }
                z[i] = acc;
            }
            let last = l + 1 == n_layers;
            let a = if last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            acts.push(a);
        }
        Trace { acts, pre }
    }

    /// Accumulates the parameter gradient for one sample into `grad`, given
    /// the derivative of the loss with respect to the (linear) output.
    pub fn backprop(&self, params: &[f64], trace: &Trace, out_grad: &[f64], grad: &mut [f64]) {
        let n_layers = self.layers.len() - 1;
        let mut delta = out_grad.to_vec();
        // walk layers from the top; offsets recomputed per layer
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.layers.windows(2) {
            offsets.push(offset);
            offset += w[1] * (w[0] + 1);
        }
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let off = offsets[l];
            let prev = &trace.acts[l];
            for i in 0..n_out {
                let di = delta[i];
                let wrow = &mut grad[off + i * n_in..off + (i + 1) * n_in];
                for (g, xj) in wrow.iter_mut().zip(prev) {
                    *g += di * xj;
                }
                grad[off + n_out * n_in + i] += di;
            }
            if l > 0 {
                let weights = &params[off..off + n_out * n_in];
                let mut next = vec![0.0; n_in];
                for (j, nj) in next.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..n_out {
                        acc += weights[i * n_in + j] * delta[i];
                    }
                    *nj = acc;
                }
                for (j, nj) in next.iter_mut().enumerate() {
                    *nj *= self.activation.deriv(trace.pre[l - 1][j], trace.acts[l][j]);
                }
                delta = next;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_dim_counts_weights_and_biases() {
        let v = MlpView {
            layers: &[3, 8, 2],
            activation: Activation::Tanh,
        };
        assert_eq!(v.param_dim(), 8 * 4 + 2 * 9);
    }

    #[test]
    fn single_linear_layer_gradient_is_residual_times_input() {
        // one sample, loss = ||Wx + b - y||^2, gradient dW = 2(y_hat - y) x^T
        let v = MlpView {
            layers: &[2, 1],
            activation: Activation::Tanh,
        };
        let params = vec![0.5, -0.25, 0.1];
        let x = [2.0, 3.0];
        let y = [1.0];
        let trace = v.forward(&params, &x);
        let out = trace.output()[0];
        assert!((out - (0.5 * 2.0 - 0.25 * 3.0 + 0.1)).abs() < 1e-15);
        let mut grad = vec![0.0; 3];
        v.backprop(&params, &trace, &[2.0 * (out - y[0])], &mut grad);
        let r = 2.0 * (out - y[0]);
        assert!((grad[0] - r * x[0]).abs() < 1e-14);
        assert!((grad[1] - r * x[1]).abs() < 1e-14);
        assert!((grad[2] - r).abs() < 1e-14);
    }
}
