use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self { window: 2, stride: 2 }
    }
}

impl PoolSpec {
    pub fn output_extent(&self, rows: usize, cols: usize) -> Result<(usize, usize), NnError> {
        if self.window == 0 || self.stride == 0 {
            return Err(NnError::Config("pool window and stride must be >= 1".into()));
        }
        if self.window > rows || self.window > cols {
            return Err(NnError::Shape(format!(
                "pool window {} larger than input {rows}x{cols}",
                self.window
            )));
        }
        Ok((
            (rows - self.window) / self.stride + 1,
            (cols - self.window) / self.stride + 1,
        ))
    }
}

/// Pooled tensor plus the flat input index each output cell was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Max pooling over `[channels, rows, cols]`. Ties keep the first maximum in
/// row-major window order.
pub fn max_pool2d(input: &Tensor, spec: PoolSpec) -> Result<Pooled, NnError> {
    if input.shape().len() != 3 {
        return Err(NnError::Shape(format!("max_pool2d needs 3-d input, got {:?}", input.shape())));
    }
    let (ch, rows, cols) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = spec.output_extent(rows, cols)?;
    let mut out = Tensor::zeros(&[ch, oh, ow]);
    let mut argmax = vec![0; ch * oh * ow];
    let x = input.data();
    for c in 0..ch {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for p in 0..spec.window {
                    for q in 0..spec.window {
                        let idx = (c * rows + i * spec.stride + p) * cols + j * spec.stride + q;
                        if x[idx] > best || p + q == 0 {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (c * oh + i) * ow + j;
                out.data_mut()[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok(Pooled { output: out, argmax })
}

/// Routes each upstream cell to the input position that won its window.
pub fn max_pool2d_backward(upstream: &Tensor, pooled: &Pooled, input_shape: &[usize]) -> Result<Tensor, NnError> {
    upstream.expect_shape(pooled.output.shape(), "max_pool2d upstream gradient")?;
    let mut g = Tensor::zeros(input_shape);
    for (&idx, &gv) in pooled.argmax.iter().zip(upstream.data()) {
        g.data_mut()[idx] += gv;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_relative_error, numeric_gradient};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn picks_window_maximum() {
        let x = Tensor::new(vec![1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let p = max_pool2d(&x, PoolSpec::default()).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);
    }

    #[test]
    fn constant_input_gives_constant_output() {
        let x = Tensor::filled(&[2, 6, 6], 0.7);
        let p = max_pool2d(&x, PoolSpec::default()).unwrap();
        assert_eq!(p.output.shape(), &[2, 3, 3]);
        assert!(p.output.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn window_larger_than_input_is_rejected() {
        let x = Tensor::zeros(&[1, 1, 4]);
        assert!(max_pool2d(&x, PoolSpec::default()).is_err());
    }

    #[test]
    fn odd_extent_drops_trailing_row() {
        let x = Tensor::zeros(&[3, 7, 6]);
        let p = max_pool2d(&x, PoolSpec::default()).unwrap();
        assert_eq!(p.output.shape(), &[3, 3, 3]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = Tensor::new(vec![2, 7, 6], (0..84).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let p = max_pool2d(&x, PoolSpec::default()).unwrap();
        let up = Tensor::new(vec![2, 3, 3], (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let g = max_pool2d_backward(&up, &p, x.shape()).unwrap();
        let num = numeric_gradient(
            |xv| {
                let xt = Tensor::new(vec![2, 7, 6], xv.to_vec()).unwrap();
                max_pool2d(&xt, PoolSpec::default()).unwrap().output.dot(&up)
            },
            x.data(),
            1e-6,
        );
        assert!(max_relative_error(g.data(), &num) < 1e-4);
        // only argmax cells receive gradient
        let nonzero = g.data().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 18);
    }
}
