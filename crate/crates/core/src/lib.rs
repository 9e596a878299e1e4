//! CATS-Linear: classification-auxiliary routing of univariate instances to
//! trend/seasonal linear predictors, plus a Monte Carlo lab for the excess-risk
//! behaviour of different channel designs.
//!
//! The pipeline for one batch of windows is
//!
//! ```text
//! window (B x D x L) -> flatten to B*D instances -> RevIN norm
//!     -> classifier (K probabilities)
//!     -> K TSLinear predictors -> RevIN denorm
//! ```
//!
//! Training routes every instance to exactly one predictor using the
//! prediction errors of the predictors themselves; inference mixes the K
//! predictions with the classifier probabilities.

pub mod caci;
pub mod checkpoint;
pub mod classifier;
pub mod dataset;
mod error;
pub mod normalization;
pub mod params;
pub(crate) mod rng;
pub mod theory;
pub mod tslinear;

pub use caci::{
    evaluate, n_k_schedule, train_loop, Adam, AdamConfig, CatsLinear, ClassAssignment, EpochRecord,
    Metrics, ModelConfig, TrainConfig, TrainOutcome,
};
pub use classifier::{Classifier, ClassifierKind};
pub use checkpoint::Checkpoint;
pub use dataset::{InstanceBatch, SeriesDataset, SplitRanges, SplitRatio, Standardizer, WindowBatch};
pub use error::{Error, Result};
pub use normalization::{AffineParams, InstanceStats, RevIn};
pub use params::Parameters;
pub use tslinear::{TsLinear, TsLinearConfig};
