use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, ClassifierKind};
use crate::error::{Error, Result};
use crate::normalization::{AffineGrad, RevIn};
use crate::params::Parameters;
use crate::rng::stream_rng;
use crate::tslinear::{TsLinear, TsLinearConfig};

/// Architecture of a full CATS-Linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub predictor: TsLinearConfig,
    /// Number of predictors K.
    pub classes: usize,
    /// Series features D (sizes the per-feature affine).
    pub n_features: usize,
    pub classifier: ClassifierKind,
    pub hidden: usize,
    pub affine: bool,
}

impl ModelConfig {
    pub fn new(predictor: TsLinearConfig, classes: usize, n_features: usize) -> Self {
        ModelConfig { predictor, classes, n_features, classifier: ClassifierKind::Mlp, hidden: 64, affine: true }
    }

    pub fn validate(&self) -> Result<()> {
        self.predictor.validate()?;
        if self.classes == 0 {
            return Err(Error::InvalidParameter("need at least one class".into()));
        }
        if self.n_features == 0 || self.hidden == 0 {
            return Err(Error::InvalidParameter("n_features and hidden must be positive".into()));
        }
        Ok(())
    }
}

/// RevIN, a classifier and K TSLinear predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct CatsLinear {
    pub config: ModelConfig,
    pub revin: RevIn,
    pub predictors: Vec<TsLinear>,
    pub classifier: Classifier,
}

impl CatsLinear {
    /// Seeded initialization: the classifier draws from stream 0 and
    /// predictor k from stream k + 1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let predictors = (0..config.classes)
            .map(|k| TsLinear::new(config.predictor.clone(), &mut stream_rng(seed, k as u64 + 1)))
            .collect::<Result<Vec<_>>>()?;
        let classifier = Classifier::new(
            config.classifier,
            config.predictor.lookback,
            config.hidden,
            config.classes,
            &mut stream_rng(seed, 0),
        );
        Ok(CatsLinear { revin: RevIn::new(config.n_features, config.affine), predictors, classifier, config })
    }

    pub fn classes(&self) -> usize {
        self.predictors.len()
    }

    /// Classifier probabilities for raw lookbacks.
    pub fn class_probabilities(&self, x: ArrayView2<f64>, feature: &[usize]) -> Array2<f64> {
        let (x_norm, _) = self.revin.norm_batch(x, feature);
        self.classifier.predict(x_norm.view())
    }

    /// Most probable class of every instance.
    pub fn route(&self, x: ArrayView2<f64>, feature: &[usize]) -> Vec<usize> {
        self.class_probabilities(x, feature)
            .outer_iter()
            .map(|p| p.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best }).0)
            .collect()
    }

    /// Probability-weighted forecast: the K normalized forecasts are mixed
    /// with the classifier probabilities, then denormalized once.
    pub fn predict(&self, x: ArrayView2<f64>, feature: &[usize]) -> Result<Array2<f64>> {
        let (x_norm, stats) = self.revin.norm_batch(x, feature);
        let probs = self.classifier.predict(x_norm.view());
        let mut mixed = Array2::zeros((x.nrows(), self.config.predictor.horizon));
        for (k, f) in self.predictors.iter().enumerate() {
            let y_k = f.predict(x_norm.view())?;
            let w = probs.column(k).insert_axis(Axis(1));
            mixed += &(&y_k * &w);
        }
        Ok(self.revin.denorm_batch(mixed.view(), &stats, feature))
    }

    /// Single-instance form of [`CatsLinear::predict`].
    pub fn predict_weighted(&self, x: &[f64], feature: usize) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.predict(x, &[feature])?.row(0).to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.predictors.len() != self.config.classes || self.classifier.classes() != self.config.classes {
            return Err(Error::Shape("predictor/classifier count does not match K".into()));
        }
        for p in &self.predictors {
            p.validate()?;
        }
        self.revin.affine.validate()?;
        if self.revin.affine.n_features() != self.config.n_features {
            return Err(Error::Shape("affine parameters do not match the feature count".into()));
        }
        Ok(())
    }
}

impl Parameters for RevIn {
    fn tensors(&self) -> Vec<&[f64]> {
        if self.affine.enabled {
            vec![&self.affine.alpha, &self.affine.beta]
        } else {
            Vec::new()
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        if self.affine.enabled {
            vec![&mut self.affine.alpha, &mut self.affine.beta]
        } else {
            Vec::new()
        }
    }
}

impl Parameters for AffineGrad {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.alpha, &self.beta]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.alpha, &mut self.beta]
    }
}
