use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

// Inputs are clamped so that outputs stay strictly inside (0, 1) and (-1, 1)
// in f64 arithmetic.
const SIGMOID_CLAMP: f64 = 36.0;
const TANH_CLAMP: f64 = 18.0;

pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(z: f64) -> f64 {
    z.clamp(-TANH_CLAMP, TANH_CLAMP).tanh()
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => tanh(z),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn apply_all(self, t: &mut [f64]) {
        t.iter_mut().for_each(|v| *v = self.apply(*v));
    }

    /// Multiplies `upstream` in place by the derivative at `output`.
    pub fn backprop(self, output: &[f64], upstream: &mut [f64]) {
        for (g, &y) in upstream.iter_mut().zip(output) {
            *g *= self.derivative_from_output(y);
        }
    }
}

/// `s(W x + b)` with `W` shaped `[out, in]`.
pub fn dense_forward(
    input: &[f64],
    weights: &Tensor,
    bias: &Tensor,
    activation: Activation,
) -> Result<Vec<f64>, NnError> {
    let ws = weights.shape();
    if ws.len() != 2 || ws[1] != input.len() || bias.len() != ws[0] {
        return Err(NnError::Shape(format!(
            "dense: weights {ws:?}, bias {:?}, input length {}",
            bias.shape(),
            input.len()
        )));
    }
    let n_in = ws[1];
    let w = weights.data();
    Ok(bias
        .data()
        .iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &w[o * n_in..(o + 1) * n_in];
            activation.apply(b + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>())
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Vec<f64>,
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        Self {
            weights: glorot_uniform(&[outputs, inputs], inputs, outputs, rng),
            bias: Tensor::zeros(&[outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        dense_forward(input, &self.weights, &self.bias, self.activation)
    }

    /// Gradients given the forward `input`, its `output` and the upstream
    /// gradient with respect to `output`.
    pub fn backward(&self, input: &[f64], output: &[f64], upstream: &[f64]) -> DenseGrads {
        let (n_out, n_in) = (self.outputs(), self.inputs());
        let mut delta = upstream.to_vec();
        self.activation.backprop(output, &mut delta);
        let mut gw = Tensor::zeros(&[n_out, n_in]);
        let mut gi = vec![0.0; n_in];
        let w = self.weights.data();
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &mut gw.data_mut()[o * n_in..(o + 1) * n_in];
            for (g, &x) in row.iter_mut().zip(input) {
                *g = d * x;
            }
            for (g, &wv) in gi.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *g += d * wv;
            }
        }
        DenseGrads {
            input: gi,
            weights: gw,
            bias: Tensor::from_vec(delta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_relative_error, numeric_gradient};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let y = dense_forward(&[0.5, -2.0, 7.0], &w, &Tensor::zeros(&[3]), Activation::Identity).unwrap();
        assert_eq!(y, vec![0.5, -2.0, 7.0]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
    }

    #[test]
    fn codomains_are_open_intervals() {
        for z in [-1e6, -30.0, -3.0, -1e-3, 0.0, 2.0, 30.0, 1e6] {
            let s = sigmoid(z);
            assert!(s > 0.0 && s < 1.0);
            let t = Activation::Tanh.apply(z);
            assert!(t > -1.0 && t < 1.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let w = Tensor::zeros(&[2, 3]);
        assert!(dense_forward(&[1.0, 2.0], &w, &Tensor::zeros(&[2]), Activation::Relu).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for act in [Activation::Sigmoid, Activation::Tanh, Activation::Relu, Activation::Identity] {
            let mut layer = Dense::new(6, 4, act, &mut rng);
            layer.bias.data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let up: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = layer.forward(&x).unwrap();
            let g = layer.backward(&x, &y, &up);
            let loss = |out: Vec<f64>| out.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>();
            let num_w = numeric_gradient(
                |w| {
                    let wt = Tensor::new(vec![4, 6], w.to_vec()).unwrap();
                    loss(dense_forward(&x, &wt, &layer.bias, act).unwrap())
                },
                layer.weights.data(),
                1e-5,
            );
            assert!(max_relative_error(g.weights.data(), &num_w) < 1e-4, "{act:?}");
            let num_x = numeric_gradient(|xv| loss(layer.forward(xv).unwrap()), &x, 1e-5);
            assert!(max_relative_error(&g.input, &num_x) < 1e-4, "{act:?}");
        }
    }
}
