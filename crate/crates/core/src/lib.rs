//! Unsupervised network-intrusion detection.
//!
//! A multi-scale convolutional autoencoder learns spatial structure of each
//! traffic record, an LSTM autoencoder learns temporal structure over windows
//! of the resulting latent vectors, and records are flagged when their
//! reconstruction error exceeds a threshold fit on normal training traffic.
//! Two isolation forests then re-examine the predicted-normal and
//! predicted-attack partitions and flip their outliers.

pub mod nn;
pub mod ingest;
pub mod mscnn;
pub mod lstm_ae;
pub mod iforest;
pub mod metrics;
pub mod detector;
pub mod synth;
pub mod model_io;
