//! Multi-scale convolutional autoencoder over 2-d feature maps.
//!
//! Encoder: three parallel same-padded convolutions (1x1, 2x2, 3x3) with ReLU,
//! channel concatenation, one max-pool, and a dense layer to the latent
//! vector. Decoder: a dense layer back to the pooled shape, a strided
//! transposed convolution up to the input extents, and a stride-1 transposed
//! convolution to one output channel with a sigmoid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::FeatureMap;
use crate::nn::conv::{ConvGrads, Padding};
use crate::nn::dense::DenseGrads;
use crate::nn::loss::{mean_squared_error, mean_squared_error_grad, reconstruction_error};
use crate::nn::pool::{max_pool2d, max_pool2d_backward, Pooled};
use crate::nn::tensor::{concat_channels, split_channels};
use crate::nn::{Activation, Conv2d, ConvSpec, Dense, NnError, PoolSpec, Tensor, Trainable, TransposedConv2d};

pub const BRANCH_KERNELS: [usize; 3] = [1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MscnnConfig {
    pub rows: usize,
    pub cols: usize,
    /// Unpadded feature count `d`; grid cells past `d` are padding and do not
    /// contribute to the loss.
    pub features: usize,
    pub filters_per_branch: usize,
    pub latent_dim: usize,
    pub pool: PoolSpec,
}

impl MscnnConfig {
    /// Defaults for a `d`-feature record: 8 filters per branch, latent 32
    /// (capped below `d`), 2x2 max-pool with stride 2.
    pub fn for_features(d: usize) -> Self {
        let (rows, cols) = FeatureMap::extents(d);
        Self {
            rows,
            cols,
            features: d,
            filters_per_branch: 8,
            latent_dim: 32.min(d.saturating_sub(1)).max(1),
            pool: PoolSpec::default(),
        }
    }

    pub fn merged_channels(&self) -> usize {
        BRANCH_KERNELS.len() * self.filters_per_branch
    }

    pub fn pooled_extent(&self) -> Result<(usize, usize), NnError> {
        self.pool.output_extent(self.rows, self.cols)
    }

    pub fn pooled_len(&self) -> Result<usize, NnError> {
        let (r, c) = self.pooled_extent()?;
        Ok(self.merged_channels() * r * c)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.rows == 0 || self.cols == 0 || self.filters_per_branch == 0 || self.latent_dim == 0 {
            return Err(NnError::Config(format!("extents, filters and latent_dim must be >= 1: {self:?}")));
        }
        if self.features == 0 || self.features > self.rows * self.cols {
            return Err(NnError::Config(format!(
                "features {} must be in 1..={}",
                self.features,
                self.rows * self.cols
            )));
        }
        if self.latent_dim >= self.rows * self.cols {
            return Err(NnError::Config(format!(
                "latent_dim {} must be smaller than the input size {}",
                self.latent_dim,
                self.rows * self.cols
            )));
        }
        let pooled = self.pooled_len()?;
        if self.latent_dim >= pooled {
            return Err(NnError::Config(format!(
                "latent_dim {} must be smaller than the pooled merged size {pooled}",
                self.latent_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MscnnModel {
    pub config: MscnnConfig,
    pub branches: Vec<Conv2d>,
    pub encoder: Dense,
    pub decoder: Dense,
    pub upsample: TransposedConv2d,
    pub output: TransposedConv2d,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    input: Tensor,
    branch_out: Vec<Tensor>,
    pooled: Pooled,
    merged_shape: Vec<usize>,
    pub latent: Vec<f64>,
    decoder_hidden: Vec<f64>,
    decoder_map: Tensor,
    upsampled: Tensor,
    pub reconstruction: Tensor,
}

fn upsample_spec(config: &MscnnConfig) -> Result<ConvSpec, NnError> {
    let (pr, pc) = config.pooled_extent()?;
    let s = config.pool.stride;
    let kr = 3.max(config.rows.saturating_sub((pr - 1) * s));
    let kc = 3.max(config.cols.saturating_sub((pc - 1) * s));
    let crop_r = (pr - 1) * s + kr - config.rows;
    let crop_c = (pc - 1) * s + kc - config.cols;
    Ok(ConvSpec {
        kernel_rows: kr,
        kernel_cols: kc,
        filters: config.filters_per_branch,
        stride_rows: s,
        stride_cols: s,
        padding: Padding {
            top: 0,
            bottom: crop_r,
            left: 0,
            right: crop_c,
        },
    })
}

fn relu_in_place(t: &mut Tensor) {
    Activation::Relu.apply_all(t.data_mut());
}

fn relu_backprop(output: &Tensor, upstream: &mut Tensor) {
    Activation::Relu.backprop(output.data(), upstream.data_mut());
}

impl MscnnModel {
    /// Builds a model with Glorot-uniform weights and zero biases drawn from
    /// a generator seeded with `seed`.
    pub fn build(config: MscnnConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branches = BRANCH_KERNELS
            .iter()
            .map(|&k| Ok(Conv2d::new(ConvSpec::same(k, config.filters_per_branch)?, 1, &mut rng)))
            .collect::<Result<Vec<_>, NnError>>()?;
        let pooled = config.pooled_len()?;
        let encoder = Dense::new(pooled, config.latent_dim, Activation::Tanh, &mut rng);
        let decoder = Dense::new(config.latent_dim, pooled, Activation::Relu, &mut rng);
        let upsample = TransposedConv2d::new(upsample_spec(&config)?, config.merged_channels(), &mut rng);
        let out_spec = ConvSpec::new(3, 3, 1, 1, 1, 1)?;
        let output = TransposedConv2d::new(out_spec, config.filters_per_branch, &mut rng);
        let model = Self {
            config,
            branches,
            encoder,
            decoder,
            upsample,
            output,
        };
        Ok(model)
    }

    pub fn input_tensor(&self, map: &FeatureMap) -> Result<Tensor, NnError> {
        if map.rows != self.config.rows || map.cols != self.config.cols {
            return Err(NnError::Shape(format!(
                "feature map is {}x{}, model expects {}x{}",
                map.rows, map.cols, self.config.rows, self.config.cols
            )));
        }
        Tensor::new(vec![1, map.rows, map.cols], map.grid.clone())
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NnError> {
        input.expect_shape(&[1, self.config.rows, self.config.cols], "mscnn input")
    }

    fn encode_cached(&self, input: &Tensor) -> Result<(Vec<Tensor>, Pooled, Vec<usize>, Vec<f64>), NnError> {
        self.check_input(input)?;
        let branch_out = self
            .branches
            .iter()
            .map(|b| {
                let mut y = b.forward(input)?;
                relu_in_place(&mut y);
                Ok(y)
            })
            .collect::<Result<Vec<_>, NnError>>()?;
        let merged = concat_channels(&branch_out)?;
        let pooled = max_pool2d(&merged, self.config.pool)?;
        let latent = self.encoder.forward(pooled.output.data())?;
        Ok((branch_out, pooled, merged.shape().to_vec(), latent))
    }

    /// Full forward pass keeping every intermediate for backward.
    pub fn forward(&self, input: &Tensor) -> Result<Forward, NnError> {
        let (branch_out, pooled, merged_shape, latent) = self.encode_cached(input)?;
        let decoder_hidden = self.decoder.forward(&latent)?;
        let decoder_map = Tensor::new(pooled.output.shape().to_vec(), decoder_hidden.clone())?;
        let mut upsampled = self.upsample.forward(&decoder_map)?;
        relu_in_place(&mut upsampled);
        let mut reconstruction = self.output.forward(&upsampled)?;
        Activation::Sigmoid.apply_all(reconstruction.data_mut());
        Ok(Forward {
            input: input.clone(),
            branch_out,
            pooled,
            merged_shape,
            latent,
            decoder_hidden,
            decoder_map,
            upsampled,
            reconstruction,
        })
    }

    pub fn encode(&self, input: &Tensor) -> Result<Vec<f64>, NnError> {
        Ok(self.encode_cached(input)?.3)
    }

    pub fn decode(&self, latent: &[f64]) -> Result<Tensor, NnError> {
        if latent.len() != self.config.latent_dim {
            return Err(NnError::Shape(format!(
                "latent length {} != latent_dim {}",
                latent.len(),
                self.config.latent_dim
            )));
        }
        let hidden = self.decoder.forward(latent)?;
        let (pr, pc) = self.config.pooled_extent()?;
        let map = Tensor::new(vec![self.config.merged_channels(), pr, pc], hidden)?;
        let mut up = self.upsample.forward(&map)?;
        relu_in_place(&mut up);
        let mut out = self.output.forward(&up)?;
        Activation::Sigmoid.apply_all(out.data_mut());
        Ok(out)
    }

    pub fn reconstruct(&self, input: &Tensor) -> Result<Tensor, NnError> {
        Ok(self.forward(input)?.reconstruction)
    }

    fn unpadded<'a>(&self, t: &'a Tensor) -> &'a [f64] {
        &t.data()[..self.config.features]
    }

    /// Sum-of-squares reconstruction error over the unpadded features.
    pub fn reconstruction_error(&self, input: &Tensor) -> Result<f64, NnError> {
        let rec = self.reconstruct(input)?;
        reconstruction_error(self.unpadded(input), self.unpadded(&rec))
    }

    pub fn encode_batch(&self, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>, NnError> {
        inputs.par_iter().map(|x| self.encode(x)).collect()
    }

    /// Gradients of `upstream · reconstruction` w.r.t. every parameter.
    pub fn backward(&self, fwd: &Forward, upstream: &Tensor) -> Result<MscnnModel, NnError> {
        let mut d_out = upstream.clone();
        Activation::Sigmoid.backprop(fwd.reconstruction.data(), d_out.data_mut());

        let out_g = self.output.backward(&d_out, &fwd.upsampled)?;
        let mut d_up = out_g.input.clone();
        relu_backprop(&fwd.upsampled, &mut d_up);
        let up_g = self.upsample.backward(&d_up, &fwd.decoder_map)?;

        let dec_g = self
            .decoder
            .backward(&fwd.latent, &fwd.decoder_hidden, up_g.input.data());
        let enc_g = self
            .encoder
            .backward(fwd.pooled.output.data(), &fwd.latent, &dec_g.input);

        let d_pooled = Tensor::new(fwd.pooled.output.shape().to_vec(), enc_g.input.clone())?;
        let d_merged = max_pool2d_backward(&d_pooled, &fwd.pooled, &fwd.merged_shape)?;
        let counts: Vec<usize> = fwd.branch_out.iter().map(|t| t.shape()[0]).collect();
        let d_branches = split_channels(&d_merged, &counts)?;
        let branch_grads = self
            .branches
            .iter()
            .zip(&fwd.branch_out)
            .zip(d_branches)
            .map(|((b, out), mut d)| {
                relu_backprop(out, &mut d);
                b.backward(&d, &fwd.input)
            })
            .collect::<Result<Vec<_>, NnError>>()?;

        Ok(self.grads_from(branch_grads, enc_g, dec_g, up_g, out_g))
    }

    fn grads_from(
        &self,
        branches: Vec<ConvGrads>,
        enc: DenseGrads,
        dec: DenseGrads,
        up: ConvGrads,
        out: ConvGrads,
    ) -> MscnnModel {
        MscnnModel {
            config: self.config,
            branches: self
                .branches
                .iter()
                .zip(branches)
                .map(|(b, g)| Conv2d {
                    spec: b.spec,
                    weights: g.weights,
                    bias: g.bias,
                })
                .collect(),
            encoder: Dense {
                weights: enc.weights,
                bias: enc.bias,
                activation: self.encoder.activation,
            },
            decoder: Dense {
                weights: dec.weights,
                bias: dec.bias,
                activation: self.decoder.activation,
            },
            upsample: TransposedConv2d {
                spec: self.upsample.spec,
                weights: up.weights,
                bias: up.bias,
            },
            output: TransposedConv2d {
                spec: self.output.spec,
                weights: out.weights,
                bias: out.bias,
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|t| t.is_finite())
    }
}

impl Trainable for MscnnModel {
    type Sample = Tensor;

    fn params(&self) -> Vec<&Tensor> {
        let mut p = Vec::with_capacity(14);
        for b in &self.branches {
            p.push(&b.weights);
            p.push(&b.bias);
        }
        p.extend([
            &self.encoder.weights,
            &self.encoder.bias,
            &self.decoder.weights,
            &self.decoder.bias,
            &self.upsample.weights,
            &self.upsample.bias,
            &self.output.weights,
            &self.output.bias,
        ]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = Vec::with_capacity(14);
        for b in &mut self.branches {
            p.push(&mut b.weights);
            p.push(&mut b.bias);
        }
        p.extend([
            &mut self.encoder.weights,
            &mut self.encoder.bias,
            &mut self.decoder.weights,
            &mut self.decoder.bias,
            &mut self.upsample.weights,
            &mut self.upsample.bias,
            &mut self.output.weights,
            &mut self.output.bias,
        ]);
        p
    }

    fn zero_grads(&self) -> Self {
        let mut z = self.clone();
        z.params_mut().into_iter().for_each(|t| t.data_mut().fill(0.0));
        z
    }

    /// Mean squared error over the unpadded features.
    fn sample_loss(&self, sample: &Tensor) -> Result<f64, NnError> {
        let rec = self.reconstruct(sample)?;
        mean_squared_error(self.unpadded(sample), self.unpadded(&rec))
    }

    fn sample_loss_and_grad(&self, sample: &Tensor) -> Result<(f64, Self), NnError> {
        let fwd = self.forward(sample)?;
        let d = self.config.features;
        let loss = mean_squared_error(self.unpadded(sample), self.unpadded(&fwd.reconstruction))?;
        let mut upstream = fwd.reconstruction.zeros_like();
        let g = mean_squared_error_grad(self.unpadded(sample), self.unpadded(&fwd.reconstruction));
        upstream.data_mut()[..d].copy_from_slice(&g);
        Ok((loss, self.backward(&fwd, &upstream)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::to_feature_map;
    use crate::nn::gradcheck::{numeric_gradient_at, relative_error};
    use crate::nn::train::train;
    use crate::nn::{OptimizerKind, TrainConfig};
    use rand::{Rng, SeedableRng};

    fn config_41() -> MscnnConfig {
        MscnnConfig::for_features(41)
    }

    fn random_map(d: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m = to_feature_map(&v);
        Tensor::new(vec![1, m.rows, m.cols], m.grid).unwrap()
    }

    #[test]
    fn nsl_kdd_layout_merges_to_24_channels() {
        let model = MscnnModel::build(config_41(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fwd = model.forward(&random_map(41, &mut rng)).unwrap();
        assert_eq!(fwd.merged_shape, vec![24, 7, 6]);
        assert_eq!(fwd.latent.len(), 32);
        assert_eq!(fwd.reconstruction.shape(), &[1, 7, 6]);
    }

    #[test]
    fn seeded_build_is_deterministic() {
        assert_eq!(MscnnModel::build(config_41(), 9).unwrap(), MscnnModel::build(config_41(), 9).unwrap());
        assert_ne!(MscnnModel::build(config_41(), 9).unwrap(), MscnnModel::build(config_41(), 10).unwrap());
    }

    #[test]
    fn latent_not_smaller_than_input_is_rejected() {
        let cfg = MscnnConfig { latent_dim: 42, ..config_41() };
        assert!(MscnnModel::build(cfg, 0).is_err());
    }

    #[test]
    fn zero_map_gives_zero_latent_under_zero_biases() {
        let model = MscnnModel::build(config_41(), 3).unwrap();
        let latent = model.encode(&Tensor::zeros(&[1, 7, 6])).unwrap();
        assert!(latent.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_extents_match_input_for_many_configs() {
        for d in 4..80 {
            let cfg = MscnnConfig { filters_per_branch: 2, latent_dim: 2, ..MscnnConfig::for_features(d) };
            if cfg.validate().is_err() {
                continue;
            }
            let model = MscnnModel::build(cfg, 0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
            let x = random_map(d, &mut rng);
            let rec = model.reconstruct(&x).unwrap();
            assert_eq!(rec.shape(), x.shape(), "d = {d}");
            let back = model.decode(&model.encode(&x).unwrap()).unwrap();
            assert_eq!(back, rec);
            assert!(model.reconstruction_error(&x).unwrap().is_finite());
        }
    }

    #[test]
    fn wrong_extents_and_latent_length_are_errors() {
        let model = MscnnModel::build(config_41(), 0).unwrap();
        assert!(model.encode(&Tensor::zeros(&[1, 6, 7])).is_err());
        assert!(model.decode(&[0.0; 31]).is_err());
    }

    #[test]
    fn zeroed_branch_zeroes_its_channel_block() {
        let mut model = MscnnModel::build(config_41(), 4).unwrap();
        model.branches[1].weights.data_mut().fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fwd = model.forward(&random_map(41, &mut rng)).unwrap();
        assert!(fwd.branch_out[1].data().iter().all(|&v| v == 0.0));
        assert!(fwd.branch_out[0].data().iter().any(|&v| v != 0.0));
        assert!(fwd.branch_out[2].data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn whole_model_gradient_matches_finite_differences() {
        let cfg = MscnnConfig { filters_per_branch: 3, latent_dim: 8, ..config_41() };
        let mut model = MscnnModel::build(cfg, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for t in model.params_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
        }
        let x = random_map(41, &mut rng);
        let (_, grads) = model.sample_loss_and_grad(&x).unwrap();
        let analytic = grads.flat_params();
        let base = model.flat_params();
        let coords: Vec<usize> = (0..150).map(|_| rng.gen_range(0..base.len())).collect();
        let mut probe = model.clone();
        let numeric = numeric_gradient_at(
            |p| {
                probe.set_flat_params(p);
                probe.sample_loss(&x).unwrap()
            },
            &base,
            1e-5,
            &coords,
        );
        let mut worst: f64 = 0.0;
        for (k, &i) in coords.iter().enumerate() {
            // ReLU kinks make a handful of coordinates non-differentiable
            if analytic[i].abs() < 1e-9 && numeric[k].abs() < 1e-9 {
                continue;
            }
            worst = worst.max(relative_error(analytic[i], numeric[k]));
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn zero_epochs_and_zero_learning_rate_leave_model_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<Tensor> = (0..20).map(|_| random_map(16, &mut rng)).collect();
        let cfg = MscnnConfig::for_features(16);
        let cfg = MscnnConfig { latent_dim: 3, ..cfg };
        let mut model = MscnnModel::build(cfg, 1).unwrap();
        let before = model.clone();
        let tc = TrainConfig { epochs: 0, batch_size: 4, ..Default::default() };
        let rep = train(&mut model, &data, &tc).unwrap();
        assert_eq!(model, before);
        assert_eq!(rep.loss_history.len(), 1);

        let tc = TrainConfig { epochs: 3, batch_size: 4, learning_rate: 0.0, optimizer: OptimizerKind::Sgd, ..Default::default() };
        let rep = train(&mut model, &data, &tc).unwrap();
        assert_eq!(model, before);
        assert!(rep.loss_history.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn memorizes_a_constant_map() {
        let cfg = MscnnConfig { filters_per_branch: 4, latent_dim: 4, ..MscnnConfig::for_features(16) };
        let mut model = MscnnModel::build(cfg, 2).unwrap();
        let x = Tensor::filled(&[1, 4, 4], 0.3);
        let data = vec![x.clone(); 16];
        let tc = TrainConfig { epochs: 150, batch_size: 8, learning_rate: 1e-2, ..Default::default() };
        train(&mut model, &data, &tc).unwrap();
        let rec = model.reconstruct(&x).unwrap();
        for &v in rec.data() {
            assert!((v - 0.3).abs() < 1e-2, "{v}");
        }
    }
}
