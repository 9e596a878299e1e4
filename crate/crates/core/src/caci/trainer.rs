//! Supervised training schema: per batch, normalize, classify, assign
//! error-supervised labels, fit each predictor on its own instances and fit
//! the classifier to the labels.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::assign::{assign_labels, n_k_schedule, ClassAssignment};
use super::metrics::{evaluate, Metrics};
use super::model::{CatsLinear, ModelConfig};
use crate::classifier::{classifier_loss, ClassifierLoss};
use crate::dataset::{batch_order, InstanceBatch, SeriesDataset, Standardizer, WindowSet};
use crate::error::{Error, Result};
use crate::normalization::{AffineGrad, InstanceStats};
use crate::params::Parameters;
use crate::tslinear::TsLinearGrad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Windows per batch; every window contributes one instance per feature.
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub predictor_lr: f64,
    pub classifier_lr: f64,
    pub classifier_loss: ClassifierLoss,
    pub stride: usize,
    /// Z-score every feature with train-split statistics before windowing.
    pub standardize: bool,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            batch_size: 128,
            epochs: 30,
            patience: 5,
            seed: 2021,
            predictor_lr: 1e-4,
            classifier_lr: 1e-5,
            classifier_loss: ClassifierLoss::Mse,
            stride: 1,
            standardize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.stride == 0 {
            return Err(Error::InvalidParameter("batch size and stride must be at least 1".into()));
        }
        if self.batch_size * self.model.n_features < self.model.classes {
            return Err(Error::InvalidParameter(format!(
                "K = {} exceeds the {} instances of a batch (B * D)",
                self.model.classes,
                self.batch_size * self.model.n_features
            )));
        }
        if !(self.predictor_lr > 0.0 && self.classifier_lr > 0.0) {
            return Err(Error::InvalidParameter("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Optimizer state for every parameter block of a model.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub predictors: Vec<Adam>,
    pub affine: Adam,
    pub classifier: Adam,
    pub classifier_loss: ClassifierLoss,
}

impl TrainState {
    pub fn new(model: &CatsLinear, predictor_lr: f64, classifier_lr: f64, classifier_loss: ClassifierLoss) -> Self {
        let p_cfg = AdamConfig::new(predictor_lr);
        TrainState {
            predictors: model.predictors.iter().map(|f| Adam::new(p_cfg, f)).collect(),
            affine: Adam::new(p_cfg, &model.revin),
            classifier: Adam::new(AdamConfig::new(classifier_lr), &model.classifier),
            classifier_loss,
        }
    }
}

/// Losses and labels of one training step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss_f: f64,
    pub loss_c: f64,
    pub assignment: ClassAssignment,
    /// Classifier probabilities (C-hat) before the update.
    pub probs: Array2<f64>,
}

/// Gradient contribution of one class.
#[derive(Debug, Clone)]
pub struct ClassGradient {
    pub predictor: TsLinearGrad,
    pub affine: AffineGrad,
    pub squared_error: f64,
}

/// Forecast loss gradients for every predictor. Predictor k only sees the
/// rows of class k; the loss is the MSE over all `n * H` denormalized outputs.
pub fn class_gradients(
    model: &CatsLinear,
    x_norm: ArrayView2<f64>,
    y: ArrayView2<f64>,
    stats: &[InstanceStats],
    feature: &[usize],
    assignment: &ClassAssignment,
) -> Result<Vec<ClassGradient>> {
    let scale = 2.0 / (x_norm.nrows() * y.ncols()) as f64;
    model
        .predictors
        .par_iter()
        .zip(assignment.members.par_iter())
        .map(|(f, rows)| {
            if rows.is_empty() {
                return Ok(ClassGradient {
                    predictor: TsLinearGrad::zeros_like(f),
                    affine: AffineGrad::zeros(model.revin.affine.n_features()),
                    squared_error: 0.0,
                });
            }
            let xk = x_norm.select(Axis(0), rows);
            let st: Vec<InstanceStats> = rows.iter().map(|&i| stats[i]).collect();
            let ft: Vec<usize> = rows.iter().map(|&i| feature[i]).collect();
            let (yk_norm, tape) = f.forward(xk.view())?;
            let yk = model.revin.denorm_batch(yk_norm.view(), &st, &ft);
            let diff = yk - y.select(Axis(0), rows);
            let squared_error = diff.iter().map(|d| d * d).sum();
            let grad_y = diff * scale;
            let grad_y_norm = model.revin.denorm_input_grad(grad_y.view(), &st, &ft);
            let (predictor, grad_x) = f.backward(&tape, grad_y_norm.view());
            let affine = model.revin.affine_grad(grad_y.view(), yk_norm.view(), xk.view(), grad_x.view(), &st, &ft);
            Ok(ClassGradient { predictor, affine, squared_error })
        })
        .collect()
}

/// One optimization step on a batch of instances.
pub fn train_step(model: &mut CatsLinear, state: &mut TrainState, batch: &InstanceBatch) -> Result<StepOutput> {
    let n = batch.len();
    let classes = model.classes();
    let (x_norm, stats) = model.revin.norm_batch(batch.x.view(), &batch.feature);
    let (probs, c_tape) = model.classifier.forward(x_norm.view());

    let schedule = n_k_schedule(n, classes);
    if n < classes {
        return Err(Error::PoolTooSmall { available: n, required: classes });
    }
    let assignment = assign_labels(
        x_norm.view(),
        batch.y.view(),
        &stats,
        &batch.feature,
        &model.revin,
        &model.predictors,
        &schedule,
    )?;
    debug_assert!(assignment.is_partition(&schedule), "label assignment is not a partition");

    let grads = class_gradients(model, x_norm.view(), batch.y.view(), &stats, &batch.feature, &assignment)?;
    let loss_f = grads.iter().map(|g| g.squared_error).sum::<f64>() / (n * batch.y.ncols()) as f64;
    if !loss_f.is_finite() {
        return Err(Error::NonFinite { stage: "forecast loss" });
    }
    let labels = assignment.one_hot();
    let (loss_c, grad_p) = classifier_loss(state.classifier_loss, &labels, &probs);
    if !loss_c.is_finite() {
        return Err(Error::NonFinite { stage: "classifier loss" });
    }
    let c_grad = model.classifier.backward(&c_tape, grad_p.view());

    let mut affine = AffineGrad::zeros(model.revin.affine.n_features());
    for (k, g) in grads.iter().enumerate() {
        state.predictors[k].step(&mut model.predictors[k], &g.predictor);
        affine.add_assign(&g.affine);
    }
    if model.revin.affine.enabled {
        state.affine.step(&mut model.revin, &affine);
        model.revin.clamp();
    }
    state.classifier.step(&mut model.classifier, &c_grad);
    if !(model.classifier.all_finite() && model.predictors.iter().all(|p| p.all_finite())) {
        return Err(Error::NonFinite { stage: "parameter update" });
    }
    Ok(StepOutput { loss_f, loss_c, assignment, probs })
}

/// Anything that can be cut into instance batches for an epoch.
pub trait InstanceSource {
    /// `batch_size` counts the source's natural unit (windows for a series).
    fn epoch_batches(&self, batch_size: usize, shuffle: bool, seed: u64) -> Box<dyn Iterator<Item = InstanceBatch> + '_>;
}

impl InstanceSource for WindowSet<'_> {
    fn epoch_batches(&self, batch_size: usize, shuffle: bool, seed: u64) -> Box<dyn Iterator<Item = InstanceBatch> + '_> {
        Box::new(self.batches(batch_size, shuffle, seed).map(|b| b.flatten()))
    }
}

impl InstanceSource for InstanceBatch {
    fn epoch_batches(&self, batch_size: usize, shuffle: bool, seed: u64) -> Box<dyn Iterator<Item = InstanceBatch> + '_> {
        let order = batch_order((0..self.len()).collect(), batch_size, shuffle, seed);
        Box::new(order.into_iter().map(move |rows| self.select(&rows)))
    }
}

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss_f: f64,
    pub train_loss_c: f64,
    pub val_mse: f64,
    pub val_mae: f64,
    /// Seconds spent on the epoch; the only field that varies between
    /// identically seeded runs.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation MSE.
    pub model: CatsLinear,
    pub log: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub test: Option<Metrics>,
    pub scaler: Option<Standardizer>,
}

const EVAL_CHUNK: usize = 256;

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64 + 1)
}

/// Runs up to `config.epochs` epochs with early stopping on validation MSE.
pub fn fit(config: &TrainConfig, mut model: CatsLinear, train: &dyn InstanceSource, val: &dyn InstanceSource) -> Result<TrainOutcome> {
    let mut state = TrainState::new(&model, config.predictor_lr, config.classifier_lr, config.classifier_loss);
    let mut best = model.clone();
    let mut best_mse = f64::INFINITY;
    let mut best_epoch = None;
    let mut since_best = 0;
    let mut log = Vec::new();
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let (mut lf, mut lc, mut steps) = (0.0, 0.0, 0usize);
        for batch in train.epoch_batches(config.batch_size, true, epoch_seed(config.seed, epoch)) {
            if batch.len() < model.classes() {
                continue;
            }
            let out = train_step(&mut model, &mut state, &batch)?;
            lf += out.loss_f;
            lc += out.loss_c;
            steps += 1;
        }
        let val_metrics = evaluate(&model, val.epoch_batches(EVAL_CHUNK, false, 0))?;
        let steps = steps.max(1) as f64;
        log.push(EpochRecord {
            epoch: epoch + 1,
            train_loss_f: lf / steps,
            train_loss_c: lc / steps,
            val_mse: val_metrics.mse,
            val_mae: val_metrics.mae,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        if val_metrics.mse < best_mse {
            best_mse = val_metrics.mse;
            best = model.clone();
            best_epoch = Some(epoch + 1);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome { model: best, log, best_epoch, test: None, scaler: None })
}

/// Splits, optionally standardizes, trains and evaluates on the test split.
pub fn train_loop(config: &TrainConfig, dataset: &SeriesDataset) -> Result<TrainOutcome> {
    config.validate()?;
    if config.model.n_features != dataset.n_features() {
        return Err(Error::Shape(format!(
            "model configured for {} features, dataset has {}",
            config.model.n_features,
            dataset.n_features()
        )));
    }
    let (l, h) = (config.model.predictor.lookback, config.model.predictor.horizon);
    let ranges = dataset.split(l, h)?;
    let scaler = config.standardize.then(|| Standardizer::fit(dataset.values.slice(ndarray::s![ranges.train.clone(), ..])));
    let values = match &scaler {
        Some(s) => s.transform(&dataset.values),
        None => dataset.values.clone(),
    };
    let train = WindowSet::new(values.view(), ranges.train.clone(), l, h, config.stride);
    let val = WindowSet::new(values.view(), ranges.val.clone(), l, h, 1);
    let test = WindowSet::new(values.view(), ranges.test.clone(), l, h, 1);
    let model = CatsLinear::new(config.model.clone(), config.seed)?;
    let mut outcome = fit(config, model, &train, &val)?;
    outcome.test = Some(evaluate(&outcome.model, test.epoch_batches(EVAL_CHUNK, false, 0))?);
    outcome.scaler = scaler;
    Ok(outcome)
}
