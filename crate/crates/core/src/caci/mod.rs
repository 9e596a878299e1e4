//! Classification-auxiliary channel independence: error-supervised routing of
//! instances to K predictors, joint training, and weighted inference.

mod adam;
mod assign;
mod metrics;
mod model;
mod trainer;

pub use adam::{adam_update, Adam, AdamConfig};
pub use assign::{assign_labels, n_k_schedule, ClassAssignment};
pub use metrics::{evaluate, evaluate_by_step, HorizonMetrics, MetricAccumulator, Metrics};
pub use model::{CatsLinear, ModelConfig};
pub use trainer::{class_gradients, fit, train_loop, train_step, ClassGradient, EpochRecord, InstanceSource, StepOutput, TrainConfig, TrainOutcome, TrainState};
