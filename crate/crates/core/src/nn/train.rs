//! Mini-batch training loop shared by both autoencoders.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::optim::{Optimizer, TrainConfig};
use super::{NnError, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("optimizer failed at epoch {epoch}, batch {batch}: {source}")]
    Optimizer {
        epoch: usize,
        batch: usize,
        source: NnError,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// A model trained by minimising the per-sample mean squared reconstruction
/// error. Gradients are returned in a model-shaped value so that the
/// parameter order of [`Trainable::params`] lines up on both sides.
pub trait Trainable: Sized + Send + Sync {
    type Sample: Sync;

    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
    fn zero_grads(&self) -> Self;
    fn sample_loss(&self, sample: &Self::Sample) -> Result<f64, NnError>;
    fn sample_loss_and_grad(&self, sample: &Self::Sample) -> Result<(f64, Self), NnError>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    fn set_flat_params(&mut self, values: &[f64]) {
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
    }
}

/// Mean loss over `samples`, summed in input order.
pub fn mean_loss<M: Trainable>(model: &M, samples: &[M::Sample]) -> Result<f64, NnError> {
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| model.sample_loss(s))
        .collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Entry 0 is the loss before training; entry `e` the loss after epoch `e`.
    pub loss_history: Vec<f64>,
    pub steps: u64,
}

/// Trains `model` in place. Per-sample gradients may be computed in
/// parallel but are always reduced in batch order, so results do not depend
/// on the thread count.
pub fn train<M: Trainable>(
    model: &mut M,
    samples: &[M::Sample],
    config: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    config
        .validate()
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    if config.batch_size > samples.len() {
        return Err(TrainError::InvalidConfig(format!(
            "batch_size {} exceeds training-set size {}",
            config.batch_size,
            samples.len()
        )));
    }

    let mut history = Vec::with_capacity(config.epochs + 1);
    let initial = mean_loss(model, samples)?;
    if !initial.is_finite() {
        return Err(TrainError::Diverged { epoch: 0, batch: 0 });
    }
    history.push(initial);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let results: Vec<(f64, M)> = chunk
                .par_iter()
                .map(|&i| model.sample_loss_and_grad(&samples[i]))
                .collect::<Result<_, _>>()?;
            let mut grads = model.zero_grads();
            let mut batch_loss = 0.0;
            {
                let mut acc = grads.params_mut();
                for (loss, g) in &results {
                    batch_loss += loss;
                    for (a, t) in acc.iter_mut().zip(g.params()) {
                        a.add_assign(t);
                    }
                }
                let scale = 1.0 / chunk.len() as f64;
                acc.iter_mut().for_each(|a| a.scale(scale));
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged { epoch, batch });
            }
            let g = grads.params();
            let mut p = model.params_mut();
            optimizer
                .step(&mut p, &g)
                .map_err(|source| TrainError::Optimizer { epoch, batch, source })?;
        }
        let loss = mean_loss(model, samples)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch, batch: 0 });
        }
        log::debug!("epoch {epoch}: loss {loss:.6e}");
        history.push(loss);
    }
    Ok(TrainReport {
        loss_history: history,
        steps: optimizer.steps(),
    })
}
