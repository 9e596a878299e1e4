use serde::{Deserialize, Serialize};

use super::model::CatsLinear;
use crate::dataset::InstanceBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    /// Number of (instance, horizon step) pairs averaged.
    pub count: usize,
}

/// Running sums for MSE/MAE over arbitrarily many prediction blocks.
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    sq: f64,
    abs: f64,
    count: usize,
}

impl MetricAccumulator {
    pub fn add(&mut self, pred: &[f64], truth: &[f64]) {
        for (p, t) in pred.iter().zip(truth) {
            let d = p - t;
            self.sq += d * d;
            self.abs += d.abs();
        }
        self.count += pred.len().min(truth.len());
    }

    pub fn finish(&self) -> Result<Metrics> {
        if self.count == 0 {
            return Err(Error::EmptySplit);
        }
        let n = self.count as f64;
        Ok(Metrics { mse: self.sq / n, mae: self.abs / n, count: self.count })
    }
}

/// MSE and MAE of the probability-weighted forecasts over every instance.
pub fn evaluate<I>(model: &CatsLinear, batches: I) -> Result<Metrics>
where
    I: IntoIterator<Item = InstanceBatch>,
{
    let mut acc = MetricAccumulator::default();
    for batch in batches {
        if batch.is_empty() {
            continue;
        }
        let pred = model.predict(batch.x.view(), &batch.feature)?;
        let pred = pred.as_standard_layout();
        let truth = batch.y.as_standard_layout();
        acc.add(pred.as_slice().expect("contiguous"), truth.as_slice().expect("contiguous"));
    }
    acc.finish()
}

/// Overall metrics plus one entry per horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub overall: Metrics,
    pub per_step: Vec<Metrics>,
}

pub fn evaluate_by_step<I>(model: &CatsLinear, batches: I) -> Result<HorizonMetrics>
where
    I: IntoIterator<Item = InstanceBatch>,
{
    let horizon = model.config.predictor.horizon;
    let mut overall = MetricAccumulator::default();
    let mut steps = vec![MetricAccumulator::default(); horizon];
    for batch in batches {
        if batch.is_empty() {
            continue;
        }
        let pred = model.predict(batch.x.view(), &batch.feature)?;
        for (p, t) in pred.outer_iter().zip(batch.y.outer_iter()) {
            for (h, (pv, tv)) in p.iter().zip(t.iter()).enumerate() {
                steps[h].add(&[*pv], &[*tv]);
                overall.add(&[*pv], &[*tv]);
            }
        }
    }
    Ok(HorizonMetrics { overall: overall.finish()?, per_step: steps.iter().map(MetricAccumulator::finish).collect::<Result<_>>()? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_and_offset_predictions() {
        let mut acc = MetricAccumulator::default();
        acc.add(&[1.0, 2.0], &[1.0, 2.0]);
        let m = acc.finish().unwrap();
        assert_eq!((m.mse, m.mae), (0.0, 0.0));
        let mut acc = MetricAccumulator::default();
        acc.add(&[2.0, 3.0, -1.0], &[1.0, 2.0, -2.0]);
        let m = acc.finish().unwrap();
        assert_eq!((m.mse, m.mae), (1.0, 1.0));
    }

    #[test]
    fn matches_double_loop() {
        let pred = [[0.3, -1.2, 0.8], [2.0, 0.1, -0.4]];
        let truth = [[0.0, -1.0, 1.0], [1.5, 0.3, 0.2]];
        let mut acc = MetricAccumulator::default();
        for (p, t) in pred.iter().zip(&truth) {
            acc.add(p, t);
        }
        let m = acc.finish().unwrap();
        let (mut sq, mut ab) = (0.0, 0.0);
        for i in 0..2 {
            for j in 0..3 {
                sq += (pred[i][j] - truth[i][j]) * (pred[i][j] - truth[i][j]);
                ab += (pred[i][j] - truth[i][j]).abs();
            }
        }
        assert_abs_diff_eq!(m.mse, sq / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.mae, ab / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(MetricAccumulator::default().finish(), Err(Error::EmptySplit)));
    }

    #[test]
    fn per_step_metrics_agree_with_overall() {
        use crate::caci::ModelConfig;
        use crate::tslinear::TsLinearConfig;
        use ndarray::Array2;
        let cfg = TsLinearConfig { period: 4, ma_window: 3, m: 2, ..TsLinearConfig::new(12, 3) };
        let model = CatsLinear::new(ModelConfig::new(cfg, 2, 1), 1).unwrap();
        let batch = InstanceBatch {
            x: Array2::from_shape_fn((5, 12), |(i, j)| ((i * 3 + j) as f64).cos()),
            y: Array2::from_shape_fn((5, 3), |(i, j)| (i + j) as f64 * 0.1),
            feature: vec![0; 5],
        };
        let by_step = evaluate_by_step(&model, [batch.clone()]).unwrap();
        let overall = evaluate(&model, [batch]).unwrap();
        assert_abs_diff_eq!(by_step.overall.mse, overall.mse, epsilon = 1e-12);
        assert_eq!(by_step.per_step.len(), 3);
        let mean: f64 = by_step.per_step.iter().map(|m| m.mse).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(mean, overall.mse, epsilon = 1e-12);
    }
}
