//! Mini-batch weight learning for LC models on precomputed features.
//!
//! The LC formula itself is compiled into a differentiable program: every
//! filter chain touching `X` becomes a lookup into the precomputed
//! `S^k·X` rows of the batch, so batches never need neighborhood data.

mod config;
mod fit;
mod model;
mod tape;

pub use config::{Precision, TrainConfig};
pub use fit::{evaluate_accuracy, train, train_any, write_history_csv, EpochRecord, TrainHistory, TrainOutcome};
pub use model::{
    adam_step, forward, init_params, loss_and_grads, softmax_cross_entropy, FeatureStore, LcModel, Mode, ModelGrads,
    ModelParams,
};

use crate::formula::FormulaError;
use num_traits::Float;
use std::fmt::Debug;
use thiserror::Error;

/// Floating-point types the trainer runs in.
pub trait Scalar: Float + Debug + Send + Sync + 'static {}
impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("precomputed features lack S^{0}·X")]
    MissingPower(u32),
    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),
    #[error("empty evaluation mask")]
    EmptyMask,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {label} at row {row} is outside the {classes} model outputs")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },
    #[error(transparent)]
    Formula(#[from] FormulaError),
}
