//! Sequence-to-sequence LSTM autoencoder over windows of latent vectors.
//!
//! The encoder LSTM runs over the window from a zero state; its final hidden
//! state is projected (tanh) to the code. The code seeds the decoder's hidden
//! state, the decoder's first input is zero and every later input is the
//! previous reconstructed vector. Each decoder hidden state is projected
//! (tanh) to one reconstructed latent vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::loss::mean_squared_error;
use crate::nn::lstm::{lstm_cell_backward, lstm_cell_step, StepCache};
use crate::nn::{Activation, Dense, LstmParams, LstmState, NnError, Tensor, Trainable};

/// How a window's reconstruction turns into one record score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMode {
    /// Mean squared error over the whole window.
    WindowMean,
    /// Mean squared error of the window's last (anchor) vector only.
    #[default]
    AnchorOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmAeConfig {
    pub window: usize,
    pub code_dim: usize,
    pub encoder_hidden: usize,
    /// Stride between training windows. Scoring always uses stride 1 so that
    /// every record gets its own window.
    pub stride: usize,
    pub error_mode: ErrorMode,
}

impl Default for LstmAeConfig {
    fn default() -> Self {
        Self {
            window: 8,
            code_dim: 16,
            encoder_hidden: 32,
            stride: 1,
            error_mode: ErrorMode::AnchorOnly,
        }
    }
}

impl LstmAeConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.window == 0 || self.code_dim == 0 || self.encoder_hidden == 0 || self.stride == 0 {
            return Err(NnError::Config(format!("window, code_dim, encoder_hidden and stride must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

/// `window` latent vectors ending at record `anchor_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSequence {
    pub window: Vec<Vec<f64>>,
    pub anchor_index: usize,
}

/// Sliding windows over `latents` in record order. Windows that would start
/// before the first record are left-padded with copies of the first latent.
pub fn make_sequences(latents: &[Vec<f64>], window: usize, stride: usize) -> Result<Vec<LatentSequence>, NnError> {
    if latents.is_empty() {
        return Err(NnError::Shape("no latent vectors to window".into()));
    }
    if window == 0 || stride == 0 {
        return Err(NnError::Config("window and stride must be >= 1".into()));
    }
    let dim = latents[0].len();
    if latents.iter().any(|l| l.len() != dim) {
        return Err(NnError::Shape("latent vectors differ in length".into()));
    }
    Ok((0..latents.len())
        .step_by(stride)
        .map(|anchor| LatentSequence {
            window: (0..window)
                .map(|k| latents[(anchor + k + 1).saturating_sub(window)].clone())
                .collect(),
            anchor_index: anchor,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmAeModel {
    pub config: LstmAeConfig,
    pub latent_dim: usize,
    pub encoder: LstmParams,
    pub code: Dense,
    pub decoder: LstmParams,
    pub output: Dense,
}

struct ForwardCache {
    enc_steps: Vec<StepCache>,
    enc_final: Vec<f64>,
    code: Vec<f64>,
    dec_steps: Vec<StepCache>,
    dec_hidden: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl LstmAeModel {
    pub fn build(config: LstmAeConfig, latent_dim: usize, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        if latent_dim == 0 {
            return Err(NnError::Config("latent_dim must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            config,
            latent_dim,
            encoder: LstmParams::new(latent_dim, config.encoder_hidden, &mut rng),
            code: Dense::new(config.encoder_hidden, config.code_dim, Activation::Tanh, &mut rng),
            decoder: LstmParams::new(latent_dim, config.code_dim, &mut rng),
            output: Dense::new(config.code_dim, latent_dim, Activation::Tanh, &mut rng),
        })
    }

    /// Model with every weight and bias zero.
    pub fn zeroed(config: LstmAeConfig, latent_dim: usize) -> Result<Self, NnError> {
        let mut m = Self::build(config, latent_dim, 0)?;
        m.params_mut().into_iter().for_each(|t| t.data_mut().fill(0.0));
        Ok(m)
    }

    fn check_window(&self, seq: &LatentSequence) -> Result<(), NnError> {
        if seq.window.len() != self.config.window {
            return Err(NnError::Shape(format!(
                "window length {} != {}",
                seq.window.len(),
                self.config.window
            )));
        }
        if let Some(v) = seq.window.iter().find(|v| v.len() != self.latent_dim) {
            return Err(NnError::Shape(format!(
                "latent length {} != {}",
                v.len(),
                self.latent_dim
            )));
        }
        Ok(())
    }

    fn forward(&self, seq: &LatentSequence) -> Result<ForwardCache, NnError> {
        self.check_window(seq)?;
        let mut state = LstmState::zeros(self.config.encoder_hidden);
        let mut enc_steps = Vec::with_capacity(seq.window.len());
        for x in &seq.window {
            let (next, cache) = lstm_cell_step(x, &state, &self.encoder)?;
            enc_steps.push(cache);
            state = next;
        }
        let enc_final = state.hidden;
        let code = self.code.forward(&enc_final)?;
        let (dec_steps, dec_hidden, outputs) = self.decode_cached(&code)?;
        Ok(ForwardCache {
            enc_steps,
            enc_final,
            code,
            dec_steps,
            dec_hidden,
            outputs,
        })
    }

    #[allow(clippy::type_complexity)]
    fn decode_cached(&self, code: &[f64]) -> Result<(Vec<StepCache>, Vec<Vec<f64>>, Vec<Vec<f64>>), NnError> {
        let mut state = LstmState {
            cell: vec![0.0; self.config.code_dim],
            hidden: code.to_vec(),
        };
        let mut input = vec![0.0; self.latent_dim];
        let w = self.config.window;
        let (mut steps, mut hidden, mut outputs) = (Vec::with_capacity(w), Vec::with_capacity(w), Vec::with_capacity(w));
        for _ in 0..w {
            let (next, cache) = lstm_cell_step(&input, &state, &self.decoder)?;
            let out = self.output.forward(&next.hidden)?;
            steps.push(cache);
            hidden.push(next.hidden.clone());
            input = out.clone();
            outputs.push(out);
            state = next;
        }
        Ok((steps, hidden, outputs))
    }

    /// The `code_dim` code for one window.
    pub fn encode(&self, seq: &LatentSequence) -> Result<Vec<f64>, NnError> {
        self.check_window(seq)?;
        let mut state = LstmState::zeros(self.config.encoder_hidden);
        for x in &seq.window {
            state = lstm_cell_step(x, &state, &self.encoder)?.0;
        }
        self.code.forward(&state.hidden)
    }

    /// Reconstructed window from a code.
    pub fn decode(&self, code: &[f64]) -> Result<Vec<Vec<f64>>, NnError> {
        if code.len() != self.config.code_dim {
            return Err(NnError::Shape(format!(
                "code length {} != code_dim {}",
                code.len(),
                self.config.code_dim
            )));
        }
        Ok(self.decode_cached(code)?.2)
    }

    pub fn reconstruct(&self, seq: &LatentSequence) -> Result<Vec<Vec<f64>>, NnError> {
        Ok(self.forward(seq)?.outputs)
    }

    /// Per-record anomaly score for the window's anchor record.
    pub fn record_error(&self, seq: &LatentSequence) -> Result<f64, NnError> {
        let rec = self.reconstruct(seq)?;
        match self.config.error_mode {
            ErrorMode::WindowMean => window_mse(&seq.window, &rec),
            ErrorMode::AnchorOnly => mean_squared_error(
                seq.window.last().expect("non-empty window"),
                rec.last().expect("non-empty window"),
            ),
        }
    }

    /// One score per record, in record order, from stride-1 windows.
    pub fn score_records(&self, latents: &[Vec<f64>]) -> Result<Vec<f64>, NnError> {
        let seqs = make_sequences(latents, self.config.window, 1)?;
        seqs.par_iter().map(|s| self.record_error(s)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|t| t.is_finite())
    }
}

fn window_mse(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64, NnError> {
    let mut total = 0.0;
    let mut n = 0;
    for (a, b) in x.iter().zip(y) {
        total += crate::nn::loss::reconstruction_error(a, b)?;
        n += a.len();
    }
    Ok(total / n.max(1) as f64)
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn add_dense(acc: &mut Dense, weights: &Tensor, bias: &Tensor) {
    acc.weights.add_assign(weights);
    acc.bias.add_assign(bias);
}

impl Trainable for LstmAeModel {
    type Sample = LatentSequence;

    fn params(&self) -> Vec<&Tensor> {
        let mut p: Vec<&Tensor> = self.encoder.tensors().into_iter().collect();
        p.extend([&self.code.weights, &self.code.bias]);
        p.extend(self.decoder.tensors());
        p.extend([&self.output.weights, &self.output.bias]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p: Vec<&mut Tensor> = self.encoder.tensors_mut().into_iter().collect();
        p.extend([&mut self.code.weights, &mut self.code.bias]);
        p.extend(self.decoder.tensors_mut());
        p.extend([&mut self.output.weights, &mut self.output.bias]);
        p
    }

    fn zero_grads(&self) -> Self {
        let mut z = self.clone();
        z.params_mut().into_iter().for_each(|t| t.data_mut().fill(0.0));
        z
    }

    /// Mean squared error over the whole window, whatever the scoring mode.
    fn sample_loss(&self, sample: &LatentSequence) -> Result<f64, NnError> {
        window_mse(&sample.window, &self.reconstruct(sample)?)
    }

    fn sample_loss_and_grad(&self, sample: &LatentSequence) -> Result<(f64, Self), NnError> {
        let cache = self.forward(sample)?;
        let loss = window_mse(&sample.window, &cache.outputs)?;
        let w = self.config.window;
        let scale = 2.0 / (w * self.latent_dim) as f64;
        let mut grads = self.zero_grads();

        // decoder, last step first
        let mut d_hidden_next = vec![0.0; self.config.code_dim];
        let mut d_cell_next = vec![0.0; self.config.code_dim];
        let mut d_input_next = vec![0.0; self.latent_dim];
        for t in (0..w).rev() {
            let mut d_out: Vec<f64> = cache.outputs[t]
                .iter()
                .zip(&sample.window[t])
                .map(|(y, x)| scale * (y - x))
                .collect();
            if t + 1 < w {
                add_into(&mut d_out, &d_input_next);
            }
            let og = self.output.backward(&cache.dec_hidden[t], &cache.outputs[t], &d_out);
            add_dense(&mut grads.output, &og.weights, &og.bias);
            add_into(&mut d_hidden_next, &og.input);
            let sg = lstm_cell_backward(&d_hidden_next, &d_cell_next, &cache.dec_steps[t], &self.decoder, &mut grads.decoder);
            d_hidden_next = sg.prev_hidden;
            d_cell_next = sg.prev_cell;
            d_input_next = sg.input;
        }

        // code projection seeds the decoder's initial hidden state
        let cg = self.code.backward(&cache.enc_final, &cache.code, &d_hidden_next);
        add_dense(&mut grads.code, &cg.weights, &cg.bias);

        let mut d_hidden = cg.input;
        let mut d_cell = vec![0.0; self.config.encoder_hidden];
        for t in (0..w).rev() {
            let sg = lstm_cell_backward(&d_hidden, &d_cell, &cache.enc_steps[t], &self.encoder, &mut grads.encoder);
            d_hidden = sg.prev_hidden;
            d_cell = sg.prev_cell;
        }
        Ok((loss, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{numeric_gradient_at, relative_error};
    use crate::nn::train::train;
    use crate::nn::TrainConfig;
    use rand::Rng;

    fn latents(n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64; dim]).collect()
    }

    #[test]
    fn head_padding_gives_one_window_per_record() {
        let seqs = make_sequences(&latents(10, 2), 4, 1).unwrap();
        assert_eq!(seqs.len(), 10);
        assert_eq!(seqs[0].window, vec![vec![0.0; 2]; 4]);
        assert_eq!(seqs[2].window.iter().map(|v| v[0]).collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 2.0]);
        assert_eq!(seqs[9].window.iter().map(|v| v[0]).collect::<Vec<_>>(), vec![6.0, 7.0, 8.0, 9.0]);
        assert!(seqs.iter().enumerate().all(|(i, s)| s.anchor_index == i));
    }

    #[test]
    fn singleton_windows() {
        let seqs = make_sequences(&latents(5, 3), 1, 1).unwrap();
        assert_eq!(seqs.len(), 5);
        assert!(seqs.iter().enumerate().all(|(i, s)| s.window == vec![vec![i as f64; 3]]));
    }

    #[test]
    fn strided_anchors() {
        let seqs = make_sequences(&latents(10, 1), 4, 2).unwrap();
        let anchors: Vec<usize> = seqs.iter().map(|s| s.anchor_index).collect();
        assert_eq!(anchors, vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn empty_latents_are_an_error() {
        assert!(make_sequences(&[], 4, 1).is_err());
    }

    #[test]
    fn zero_model_gives_zero_code_and_constant_output() {
        let cfg = LstmAeConfig { window: 4, code_dim: 3, encoder_hidden: 5, ..Default::default() };
        let model = LstmAeModel::zeroed(cfg, 6).unwrap();
        let seq = make_sequences(&latents(4, 6), 4, 1).unwrap().pop().unwrap();
        assert_eq!(model.encode(&seq).unwrap(), vec![0.0; 3]);
        let out = model.decode(&[0.0; 3]).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|v| v.len() == 6 && v.iter().all(|&x| x == out[0][0])));
    }

    #[test]
    fn code_dimension_is_constant_and_deterministic() {
        let model = LstmAeModel::build(LstmAeConfig::default(), 4, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lat: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let seqs = make_sequences(&lat, 8, 1).unwrap();
        for s in &seqs {
            let c = model.encode(s).unwrap();
            assert_eq!(c.len(), 16);
            assert_eq!(c, model.encode(s).unwrap());
            assert_eq!(model.decode(&c).unwrap().len() * 4, 8 * 4);
        }
        assert!(model.decode(&[0.0; 15]).is_err());
    }

    #[test]
    fn scores_are_independent_of_grouping() {
        let model = LstmAeModel::build(LstmAeConfig { window: 3, ..Default::default() }, 4, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lat: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let all = model.score_records(&lat).unwrap();
        assert_eq!(all.len(), 30);
        let seqs = make_sequences(&lat, 3, 1).unwrap();
        for s in &seqs {
            assert_eq!(model.record_error(s).unwrap(), all[s.anchor_index]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = LstmAeConfig { window: 3, code_dim: 4, encoder_hidden: 5, ..Default::default() };
        let mut model = LstmAeModel::build(cfg, 3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in model.params_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
        let lat: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.gen_range(-0.9..0.9)).collect()).collect();
        let seq = make_sequences(&lat, 3, 1).unwrap().pop().unwrap();
        let (_, grads) = model.sample_loss_and_grad(&seq).unwrap();
        let analytic = grads.flat_params();
        let base = model.flat_params();
        let mut probe = model.clone();
        let coords: Vec<usize> = (0..base.len()).collect();
        let numeric = numeric_gradient_at(
            |p| {
                probe.set_flat_params(p);
                probe.sample_loss(&seq).unwrap()
            },
            &base,
            1e-5,
            &coords,
        );
        assert!(coords.len() >= 100);
        let worst = coords
            .iter()
            .map(|&i| relative_error(analytic[i], numeric[i]))
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn memorizes_a_repeated_window() {
        let cfg = LstmAeConfig { window: 4, code_dim: 6, encoder_hidden: 8, ..Default::default() };
        let mut model = LstmAeModel::build(cfg, 3, 6).unwrap();
        let lat = vec![vec![0.2, -0.4, 0.6], vec![0.5, 0.1, -0.3], vec![-0.2, 0.3, 0.0], vec![0.4, 0.4, -0.5]];
        let seq = make_sequences(&lat, 4, 1).unwrap().pop().unwrap();
        let data = vec![seq.clone(); 16];
        let tc = TrainConfig { epochs: 200, batch_size: 16, learning_rate: 1e-2, ..Default::default() };
        train(&mut model, &data, &tc).unwrap();
        let rec = model.reconstruct(&seq).unwrap();
        for (a, b) in rec.iter().flatten().zip(seq.window.iter().flatten()) {
            assert!((a - b).abs() < 1e-2, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let mut model = LstmAeModel::build(LstmAeConfig { window: 2, ..Default::default() }, 2, 7).unwrap();
        let before = model.clone();
        let seqs = make_sequences(&latents(4, 2), 2, 1).unwrap();
        train(&mut model, &seqs, &TrainConfig { epochs: 0, batch_size: 2, ..Default::default() }).unwrap();
        assert_eq!(model, before);
    }
}
