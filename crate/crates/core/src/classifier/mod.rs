//! Instance classifiers mapping a normalized lookback to K class probabilities.

mod cnn;
mod mlp;

pub use cnn::{CnnClassifier, CnnConfig, CnnGrad, CnnTape, ConvBlock};
pub use mlp::{softmax_rows, MlpClassifier, MlpGrad, MlpTape};

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::params::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Mlp,
    Cnn,
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(ClassifierKind::Mlp),
            "cnn" => Ok(ClassifierKind::Cnn),
            other => Err(format!("unknown classifier variant `{other}` (expected mlp or cnn)")),
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::Cnn => "cnn",
        })
    }
}

/// Objective used to fit the classifier to the assigned labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierLoss {
    /// Mean squared difference between one-hot labels and probabilities.
    #[default]
    Mse,
    /// Mean negative log-likelihood; kept for ablations.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Mlp(MlpClassifier),
    Cnn(CnnClassifier),
}

#[derive(Debug, Clone)]
pub enum ClassifierTape {
    Mlp(MlpTape),
    Cnn(CnnTape),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierGrad {
    Mlp(MlpGrad),
    Cnn(CnnGrad),
}

impl Classifier {
    pub fn new(kind: ClassifierKind, lookback: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        match kind {
            ClassifierKind::Mlp => Classifier::Mlp(MlpClassifier::new(lookback, hidden, classes, rng)),
            ClassifierKind::Cnn => Classifier::Cnn(CnnClassifier::new(lookback, classes, CnnConfig::default(), rng)),
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Classifier::Mlp(_) => ClassifierKind::Mlp,
            Classifier::Cnn(_) => ClassifierKind::Cnn,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Classifier::Mlp(c) => c.classes(),
            Classifier::Cnn(c) => c.classes(),
        }
    }

    /// Training-mode forward; the CNN updates its running batch-norm statistics.
    pub fn forward(&mut self, x_norm: ArrayView2<f64>) -> (Array2<f64>, ClassifierTape) {
        match self {
            Classifier::Mlp(c) => {
                let (p, t) = c.forward(x_norm);
                (p, ClassifierTape::Mlp(t))
            }
            Classifier::Cnn(c) => {
                let (p, t) = c.forward(x_norm, true);
                (p, ClassifierTape::Cnn(t))
            }
        }
    }

    /// Inference-mode probabilities.
    pub fn predict(&self, x_norm: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Classifier::Mlp(c) => c.forward(x_norm).0,
            Classifier::Cnn(c) => c.predict(x_norm),
        }
    }

    pub fn backward(&self, tape: &ClassifierTape, grad_p: ArrayView2<f64>) -> ClassifierGrad {
        match (self, tape) {
            (Classifier::Mlp(c), ClassifierTape::Mlp(t)) => ClassifierGrad::Mlp(c.backward(t, grad_p)),
            (Classifier::Cnn(c), ClassifierTape::Cnn(t)) => ClassifierGrad::Cnn(c.backward(t, grad_p)),
            _ => panic!("classifier tape does not match the classifier variant"),
        }
    }
}

impl Parameters for Classifier {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Classifier::Mlp(c) => c.tensors(),
            Classifier::Cnn(c) => c.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Classifier::Mlp(c) => c.tensors_mut(),
            Classifier::Cnn(c) => c.tensors_mut(),
        }
    }
}

impl Parameters for ClassifierGrad {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            ClassifierGrad::Mlp(g) => g.tensors(),
            ClassifierGrad::Cnn(g) => g.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ClassifierGrad::Mlp(g) => g.tensors_mut(),
            ClassifierGrad::Cnn(g) => g.tensors_mut(),
        }
    }
}

/// Loss value and its gradient w.r.t. the probabilities.
pub fn classifier_loss(kind: ClassifierLoss, labels: &Array2<f64>, probs: &Array2<f64>) -> (f64, Array2<f64>) {
    match kind {
        ClassifierLoss::Mse => {
            let count = labels.len() as f64;
            let diff = probs - labels;
            let loss = diff.mapv(|d| d * d).sum() / count;
            (loss, diff * (2.0 / count))
        }
        ClassifierLoss::CrossEntropy => {
            let n = labels.nrows() as f64;
            const FLOOR: f64 = 1e-300;
            let loss = -labels.iter().zip(probs.iter()).map(|(c, p)| c * p.max(FLOOR).ln()).sum::<f64>() / n;
            let grad = ndarray::Zip::from(labels).and(probs).map_collect(|c, p| -c / (p.max(FLOOR) * n));
            (loss, grad)
        }
    }
}
