//! Dense-tensor numerics with hand-written backward passes.

pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod lstm;
pub mod optim;
pub mod pool;
pub mod tensor;
pub mod train;

use thiserror::Error;

pub use conv::{Conv2d, ConvSpec, Padding, TransposedConv2d};
pub use dense::{Activation, Dense};
pub use lstm::{LstmParams, LstmState};
pub use optim::{OptimizerKind, TrainConfig};
pub use pool::PoolSpec;
pub use tensor::Tensor;
pub use train::{TrainError, TrainReport, Trainable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}
