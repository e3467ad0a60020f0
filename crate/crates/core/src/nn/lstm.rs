//! LSTM cell over the concatenation `[h_{t-1}, x_t]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{sigmoid, tanh};
use super::init::glorot_uniform;
use super::{NnError, Tensor};

/// Gate weights are `[hidden, hidden + input]`; biases are `[hidden]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden_size: usize,
    pub input_size: usize,
    pub w_forget: Tensor,
    pub w_input: Tensor,
    pub w_candidate: Tensor,
    pub w_output: Tensor,
    pub b_forget: Tensor,
    pub b_input: Tensor,
    pub b_candidate: Tensor,
    pub b_output: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            cell: vec![0.0; hidden],
            hidden: vec![0.0; hidden],
        }
    }
}

/// Everything the backward step needs from one forward step.
#[derive(Debug, Clone)]
pub struct StepCache {
    concat: Vec<f64>,
    forget: Vec<f64>,
    input: Vec<f64>,
    candidate: Vec<f64>,
    output: Vec<f64>,
    prev_cell: Vec<f64>,
    tanh_cell: Vec<f64>,
}

impl StepCache {
    pub fn forget_gate(&self) -> &[f64] {
        &self.forget
    }
    pub fn input_gate(&self) -> &[f64] {
        &self.input
    }
    pub fn output_gate(&self) -> &[f64] {
        &self.output
    }
    pub fn candidate(&self) -> &[f64] {
        &self.candidate
    }
}

impl LstmParams {
    pub fn new<R: Rng>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let cols = hidden_size + input_size;
        let mut w = || glorot_uniform(&[hidden_size, cols], cols, hidden_size, rng);
        Self {
            hidden_size,
            input_size,
            w_forget: w(),
            w_input: w(),
            w_candidate: w(),
            w_output: w(),
            b_forget: Tensor::zeros(&[hidden_size]),
            b_input: Tensor::zeros(&[hidden_size]),
            b_candidate: Tensor::zeros(&[hidden_size]),
            b_output: Tensor::zeros(&[hidden_size]),
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let cols = hidden_size + input_size;
        let w = || Tensor::zeros(&[hidden_size, cols]);
        let b = || Tensor::zeros(&[hidden_size]);
        Self {
            hidden_size,
            input_size,
            w_forget: w(),
            w_input: w(),
            w_candidate: w(),
            w_output: w(),
            b_forget: b(),
            b_input: b(),
            b_candidate: b(),
            b_output: b(),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.w_forget,
            &self.w_input,
            &self.w_candidate,
            &self.w_output,
            &self.b_forget,
            &self.b_input,
            &self.b_candidate,
            &self.b_output,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.w_forget,
            &mut self.w_input,
            &mut self.w_candidate,
            &mut self.w_output,
            &mut self.b_forget,
            &mut self.b_input,
            &mut self.b_candidate,
            &mut self.b_output,
        ]
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let shape = [self.hidden_size, self.hidden_size + self.input_size];
        for w in [&self.w_forget, &self.w_input, &self.w_candidate, &self.w_output] {
            w.expect_shape(&shape, "lstm gate weights")?;
        }
        for b in [&self.b_forget, &self.b_input, &self.b_candidate, &self.b_output] {
            b.expect_shape(&[self.hidden_size], "lstm gate bias")?;
        }
        Ok(())
    }
}

fn affine(w: &Tensor, b: &Tensor, z: &[f64]) -> Vec<f64> {
    let cols = z.len();
    b.data()
        .iter()
        .enumerate()
        .map(|(r, &bv)| {
            bv + w.data()[r * cols..(r + 1) * cols]
                .iter()
                .zip(z)
                .map(|(a, x)| a * x)
                .sum::<f64>()
        })
        .collect()
}

/// One forward step.
pub fn lstm_cell_step(
    x: &[f64],
    prev: &LstmState,
    params: &LstmParams,
) -> Result<(LstmState, StepCache), NnError> {
    let h = params.hidden_size;
    if x.len() != params.input_size || prev.hidden.len() != h || prev.cell.len() != h {
        return Err(NnError::Shape(format!(
            "lstm step: input {} (expected {}), state {}/{} (expected {h})",
            x.len(),
            params.input_size,
            prev.hidden.len(),
            prev.cell.len()
        )));
    }
    let mut concat = Vec::with_capacity(h + x.len());
    concat.extend_from_slice(&prev.hidden);
    concat.extend_from_slice(x);

    let mut forget = affine(&params.w_forget, &params.b_forget, &concat);
    let mut input = affine(&params.w_input, &params.b_input, &concat);
    let mut candidate = affine(&params.w_candidate, &params.b_candidate, &concat);
    let mut output = affine(&params.w_output, &params.b_output, &concat);
    forget.iter_mut().for_each(|v| *v = sigmoid(*v));
    input.iter_mut().for_each(|v| *v = sigmoid(*v));
    output.iter_mut().for_each(|v| *v = sigmoid(*v));
    candidate.iter_mut().for_each(|v| *v = tanh(*v));

    let cell: Vec<f64> = (0..h)
        .map(|k| forget[k] * prev.cell[k] + input[k] * candidate[k])
        .collect();
    let tanh_cell: Vec<f64> = cell.iter().map(|&c| tanh(c)).collect();
    let hidden: Vec<f64> = (0..h).map(|k| output[k] * tanh_cell[k]).collect();

    Ok((
        LstmState { cell, hidden },
        StepCache {
            concat,
            forget,
            input,
            candidate,
            output,
            prev_cell: prev.cell.clone(),
            tanh_cell,
        },
    ))
}

/// Gradients flowing out of one backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGrads {
    pub input: Vec<f64>,
    pub prev_hidden: Vec<f64>,
    pub prev_cell: Vec<f64>,
}

/// Backward step given gradients w.r.t. this step's `h_t` and `C_t`.
/// Parameter gradients are accumulated into `grads`.
pub fn lstm_cell_backward(
    d_hidden: &[f64],
    d_cell: &[f64],
    cache: &StepCache,
    params: &LstmParams,
    grads: &mut LstmParams,
) -> StepGrads {
    let h = params.hidden_size;
    let cols = cache.concat.len();
    let mut pre = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
    let mut d_prev_cell = vec![0.0; h];
    for k in 0..h {
        let (f, i, g, o, tc) = (
            cache.forget[k],
            cache.input[k],
            cache.candidate[k],
            cache.output[k],
            cache.tanh_cell[k],
        );
        let dc = d_cell[k] + d_hidden[k] * o * (1.0 - tc * tc);
        pre[0][k] = dc * cache.prev_cell[k] * f * (1.0 - f);
        pre[1][k] = dc * g * i * (1.0 - i);
        pre[2][k] = dc * i * (1.0 - g * g);
        pre[3][k] = d_hidden[k] * tc * o * (1.0 - o);
        d_prev_cell[k] = dc * f;
    }

    let weights = [&params.w_forget, &params.w_input, &params.w_candidate, &params.w_output];
    let mut d_concat = vec![0.0; cols];
    {
        let [gwf, gwi, gwc, gwo, gbf, gbi, gbc, gbo] = grads.tensors_mut();
        let gws = [gwf, gwi, gwc, gwo];
        let gbs = [gbf, gbi, gbc, gbo];
        for (gate, ((gw, gb), w)) in gws.into_iter().zip(gbs).zip(weights).enumerate() {
            let d = &pre[gate];
            for r in 0..h {
                let dv = d[r];
                gb.data_mut()[r] += dv;
                if dv == 0.0 {
                    continue;
                }
                let grow = &mut gw.data_mut()[r * cols..(r + 1) * cols];
                for (g, &z) in grow.iter_mut().zip(&cache.concat) {
                    *g += dv * z;
                }
                for (dz, &wv) in d_concat.iter_mut().zip(&w.data()[r * cols..(r + 1) * cols]) {
                    *dz += dv * wv;
                }
            }
        }
    }
    let input = d_concat.split_off(h);
    StepGrads {
        input,
        prev_hidden: d_concat,
        prev_cell: d_prev_cell,
    }
}
