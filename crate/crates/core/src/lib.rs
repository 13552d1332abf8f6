//! Small convolutional networks for traffic-sign classification, with
//! transfer learning between sign datasets.
//!
//! Everything runs on the CPU in plain Rust. Training is deterministic for a
//! given seed regardless of the worker thread count.

#[cfg(feature = "cli")]
pub mod cli;
pub mod data;
pub mod error;
pub mod nn;
pub mod parallel;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod transfer;

pub use error::{CorruptKind, Error, Result};
pub use nn::{LayerSpec, Model, ModelSpec, Phase};
pub use rng::Rng;
pub use tensor::{Scalar, Tensor};
pub use train::{EpochMetrics, History, TrainConfig};
pub use transfer::{Checkpoint, FreezeMode};
