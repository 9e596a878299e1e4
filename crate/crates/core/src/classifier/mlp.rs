use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::params::Parameters;
use crate::rng::uniform_matrix;

/// `softmax(W2 tanh(W1 x + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpTape {
    x: Array2<f64>,
    hidden: Array2<f64>,
    probs: Array2<f64>,
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Backward through a row-wise softmax given its output.
pub(crate) fn softmax_backward(probs: &Array2<f64>, grad_p: ArrayView2<f64>) -> Array2<f64> {
    let mut g = Array2::zeros(probs.raw_dim());
    for ((p, gp), mut gl) in probs.outer_iter().zip(grad_p.outer_iter()).zip(g.outer_iter_mut()) {
        let dot = p.dot(&gp);
        for k in 0..p.len() {
            gl[k] = p[k] * (gp[k] - dot);
        }
    }
    g
}

impl MlpClassifier {
    /// Weights uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn new(lookback: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        MlpClassifier {
            w1: uniform_matrix(hidden, lookback, 1.0 / (lookback as f64).sqrt(), rng),
            b1: Array1::zeros(hidden),
            w2: uniform_matrix(classes, hidden, 1.0 / (hidden as f64).sqrt(), rng),
            b2: Array1::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.w2.nrows()
    }

    pub fn lookback(&self) -> usize {
        self.w1.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpTape) {
        let hidden = (x.dot(&self.w1.t()) + &self.b1).mapv(f64::tanh);
        let logits = hidden.dot(&self.w2.t()) + &self.b2;
        let probs = softmax_rows(&logits);
        (probs.clone(), MlpTape { x: x.to_owned(), hidden, probs })
    }

    pub fn backward(&self, tape: &MlpTape, grad_p: ArrayView2<f64>) -> MlpGrad {
        let g_logits = softmax_backward(&tape.probs, grad_p);
        let w2 = g_logits.t().dot(&tape.hidden);
        let b2 = g_logits.sum_axis(Axis(0));
        let g_hidden = g_logits.dot(&self.w2) * tape.hidden.mapv(|h| 1.0 - h * h);
        let w1 = g_hidden.t().dot(&tape.x);
        let b1 = g_hidden.sum_axis(Axis(0));
        MlpGrad { w1, b1, w2, b2 }
    }
}

macro_rules! mlp_tensors {
    ($t:ty) => {
        impl Parameters for $t {
            fn tensors(&self) -> Vec<&[f64]> {
                vec![
                    self.w1.as_slice().expect("standard layout"),
                    self.b1.as_slice().expect("standard layout"),
                    self.w2.as_slice().expect("standard layout"),
                    self.b2.as_slice().expect("standard layout"),
                ]
            }

            fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
                vec![
                    self.w1.as_slice_mut().expect("standard layout"),
                    self.b1.as_slice_mut().expect("standard layout"),
                    self.w2.as_slice_mut().expect("standard layout"),
                    self.b2.as_slice_mut().expect("standard layout"),
                ]
            }
        }
    };
}

mlp_tensors!(MlpClassifier);
mlp_tensors!(MlpGrad);
