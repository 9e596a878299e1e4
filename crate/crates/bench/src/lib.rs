//! Deterministic fixtures shared by the benchmarks.

use cats_core::caci::TrainState;
use cats_core::classifier::ClassifierLoss;
use cats_core::{CatsLinear, InstanceBatch, ModelConfig, TsLinearConfig};
use ndarray::Array2;

/// A smooth periodic signal with a per-row phase shift.
pub fn signal(rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let t = (c + 7 * r) as f64;
        (t * 0.26).sin() + 0.3 * (t * 0.05).cos() + 0.001 * r as f64
    })
}

pub fn instances(n: usize, lookback: usize, horizon: usize, features: usize) -> InstanceBatch {
    let full = signal(n, lookback + horizon);
    InstanceBatch {
        x: full.slice(ndarray::s![.., ..lookback]).to_owned(),
        y: full.slice(ndarray::s![.., lookback..]).to_owned(),
        feature: (0..n).map(|i| i % features).collect(),
    }
}

pub fn model(classes: usize, lookback: usize, horizon: usize, features: usize) -> CatsLinear {
    let config = ModelConfig::new(TsLinearConfig::new(lookback, horizon), classes, features);
    CatsLinear::new(config, 2021).expect("valid benchmark model")
}

pub fn train_state(model: &CatsLinear) -> TrainState {
    TrainState::new(model, 1e-4, 1e-5, ClassifierLoss::Mse)
}
