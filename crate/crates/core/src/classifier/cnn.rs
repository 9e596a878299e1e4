//! Experimental convolutional classifier: three `conv1d -> batch-norm -> relu`
//! stages followed by a dense softmax layer.

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{softmax_backward, softmax_rows};
use crate::params::Parameters;
use crate::rng::uniform_matrix;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig { channels: vec![16, 32, 32], kernel: 5, stride: 2 }
    }
}

/// Output length and left padding of a "same" convolution with stride.
fn same_geometry(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(len);
    (out, total / 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    /// out_channels x (in_channels * kernel)
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub in_channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnClassifier {
    pub config: CnnConfig,
    pub lookback: usize,
    pub blocks: Vec<ConvBlock>,
    pub fc_weight: Array2<f64>,
    pub fc_bias: Array1<f64>,
}

/// Convolution weight, convolution bias, batch-norm scale and batch-norm shift.
pub type BlockGrad = (Array2<f64>, Array1<f64>, Array1<f64>, Array1<f64>);

/// Per-channel batch mean and variance.
type BatchMoments = (Array1<f64>, Array1<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct CnnGrad {
    pub blocks: Vec<BlockGrad>,
    pub fc_weight: Array2<f64>,
    pub fc_bias: Array1<f64>,
}

#[derive(Debug, Clone)]
struct BlockTape {
    input: Array3<f64>,
    normalized: Array3<f64>,
    inv_std: Array1<f64>,
    out: Array3<f64>,
}

#[derive(Debug, Clone)]
pub struct CnnTape {
    blocks: Vec<BlockTape>,
    flat: Array2<f64>,
    probs: Array2<f64>,
    training: bool,
}

impl ConvBlock {
    fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_channels * kernel;
        ConvBlock {
            weight: uniform_matrix(out_channels, fan_in, 1.0 / (fan_in as f64).sqrt(), rng),
            bias: Array1::zeros(out_channels),
            gamma: Array1::ones(out_channels),
            beta: Array1::zeros(out_channels),
            running_mean: Array1::zeros(out_channels),
            running_var: Array1::ones(out_channels),
            in_channels,
        }
    }

    fn out_channels(&self) -> usize {
        self.weight.nrows()
    }

    fn conv(&self, input: &Array3<f64>, kernel: usize, stride: usize) -> Array3<f64> {
        let (n, c_in, len) = input.dim();
        let (out_len, pad) = same_geometry(len, kernel, stride);
        let c_out = self.out_channels();
        let mut out = Array3::zeros((n, c_out, out_len));
        for b in 0..n {
            for o in 0..c_out {
                let w = self.weight.row(o);
                for t in 0..out_len {
                    let mut acc = self.bias[o];
                    for c in 0..c_in {
                        for k in 0..kernel {
                            let pos = (t * stride + k) as isize - pad as isize;
                            if pos >= 0 && (pos as usize) < len {
                                acc += w[c * kernel + k] * input[[b, c, pos as usize]];
                            }
                        }
                    }
                    out[[b, o, t]] = acc;
                }
            }
        }
        out
    }

    fn forward(&self, input: &Array3<f64>, cfg: &CnnConfig, training: bool) -> (Array3<f64>, BlockTape, Option<BatchMoments>) {
        let pre = self.conv(input, cfg.kernel, cfg.stride);
        let (n, c_out, len) = pre.dim();
        let count = (n * len) as f64;
        let (mean, var) = if training {
            let mut mean = Array1::zeros(c_out);
            let mut var = Array1::zeros(c_out);
            for o in 0..c_out {
                let lane = pre.index_axis(Axis(1), o);
                let m = lane.sum() / count;
                mean[o] = m;
                var[o] = lane.iter().map(|v| (v - m).powi(2)).sum::<f64>() / count;
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let mut normalized = pre;
        let mut out = Array3::zeros((n, c_out, len));
        for o in 0..c_out {
            let mut lane = normalized.index_axis_mut(Axis(1), o);
            lane.mapv_inplace(|v| (v - mean[o]) * inv_std[o]);
            let mut dst = out.index_axis_mut(Axis(1), o);
            dst.zip_mut_with(&lane, |d, &z| *d = (self.gamma[o] * z + self.beta[o]).max(0.0));
        }
        let batch_stats = training.then(|| {
            let unbiased = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            (mean, var * unbiased)
        });
        let tape = BlockTape { input: input.clone(), normalized, inv_std, out: out.clone() };
        (out, tape, batch_stats)
    }

    #[allow(clippy::type_complexity)]
    fn backward(&self, tape: &BlockTape, grad_out: &Array3<f64>, cfg: &CnnConfig, training: bool) -> (BlockGrad, Array3<f64>) {
        let (n, c_out, len) = grad_out.dim();
        let count = (n * len) as f64;
        let mut g_gamma = Array1::zeros(c_out);
        let mut g_beta = Array1::zeros(c_out);
        let mut g_pre = Array3::zeros((n, c_out, len));
        for o in 0..c_out {
            // relu then affine
            let mut g_z = Array2::zeros((n, len));
            for b in 0..n {
                for t in 0..len {
                    let g = if tape.out[[b, o, t]] > 0.0 { grad_out[[b, o, t]] } else { 0.0 };
                    g_beta[o] += g;
                    g_gamma[o] += g * tape.normalized[[b, o, t]];
                    g_z[[b, t]] = g * self.gamma[o];
                }
            }
            let inv = tape.inv_std[o];
            if training {
                let sum_g = g_z.sum();
                let sum_gz: f64 = (0..n)
                    .flat_map(|b| (0..len).map(move |t| (b, t)))
                    .map(|(b, t)| g_z[[b, t]] * tape.normalized[[b, o, t]])
                    .sum();
                for b in 0..n {
                    for t in 0..len {
                        g_pre[[b, o, t]] = inv / count * (count * g_z[[b, t]] - sum_g - tape.normalized[[b, o, t]] * sum_gz);
                    }
                }
            } else {
                for b in 0..n {
                    for t in 0..len {
                        g_pre[[b, o, t]] = g_z[[b, t]] * inv;
                    }
                }
            }
        }

        let (_, c_in, in_len) = tape.input.dim();
        let (_, pad) = same_geometry(in_len, cfg.kernel, cfg.stride);
        let mut g_w = Array2::zeros(self.weight.raw_dim());
        let g_b = g_pre.sum_axis(Axis(2)).sum_axis(Axis(0));
        let mut g_in = Array3::zeros((n, c_in, in_len));
        for b in 0..n {
            for o in 0..c_out {
                for t in 0..len {
                    let g = g_pre[[b, o, t]];
                    if g == 0.0 {
                        continue;
                    }
                    for c in 0..c_in {
                        for k in 0..cfg.kernel {
                            let pos = (t * cfg.stride + k) as isize - pad as isize;
                            if pos >= 0 && (pos as usize) < in_len {
                                let p = pos as usize;
                                g_w[[o, c * cfg.kernel + k]] += g * tape.input[[b, c, p]];
                                g_in[[b, c, p]] += g * self.weight[[o, c * cfg.kernel + k]];
                            }
                        }
                    }
                }
            }
        }
        ((g_w, g_b, g_gamma, g_beta), g_in)
    }
}

impl CnnClassifier {
    pub fn new(lookback: usize, classes: usize, config: CnnConfig, rng: &mut impl Rng) -> Self {
        let mut blocks = Vec::with_capacity(config.channels.len());
        let mut c_in = 1;
        let mut len = lookback;
        for &c_out in &config.channels {
            blocks.push(ConvBlock::new(c_in, c_out, config.kernel, rng));
            c_in = c_out;
            len = same_geometry(len, config.kernel, config.stride).0;
        }
        let flat = c_in * len;
        CnnClassifier {
            fc_weight: uniform_matrix(classes, flat, 1.0 / (flat as f64).sqrt(), rng),
            fc_bias: Array1::zeros(classes),
            blocks,
            config,
            lookback,
        }
    }

    pub fn classes(&self) -> usize {
        self.fc_weight.nrows()
    }

    /// `training` uses batch statistics and updates the running estimates.
    pub fn forward(&mut self, x: ArrayView2<f64>, training: bool) -> (Array2<f64>, CnnTape) {
        let n = x.nrows();
        let mut act = x.to_owned().into_shape_with_order((n, 1, self.lookback)).expect("contiguous");
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let (out, tape, stats) = block.forward(&act, &self.config, training);
            if let Some((mean, var)) = stats {
                block.running_mean = &block.running_mean * (1.0 - BN_MOMENTUM) + &mean * BN_MOMENTUM;
                block.running_var = &block.running_var * (1.0 - BN_MOMENTUM) + &var * BN_MOMENTUM;
            }
            tapes.push(tape);
            act = out;
        }
        let flat_len = act.len() / n;
        let flat = act.into_shape_with_order((n, flat_len)).expect("contiguous");
        let logits = flat.dot(&self.fc_weight.t()) + &self.fc_bias;
        let probs = softmax_rows(&logits);
        (probs.clone(), CnnTape { blocks: tapes, flat, probs, training })
    }

    /// Inference without touching the running statistics.
    pub fn predict(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut frozen = self.clone();
        frozen.forward(x, false).0
    }

    pub fn backward(&self, tape: &CnnTape, grad_p: ArrayView2<f64>) -> CnnGrad {
        let g_logits = softmax_backward(&tape.probs, grad_p);
        let fc_weight = g_logits.t().dot(&tape.flat);
        let fc_bias = g_logits.sum_axis(Axis(0));
        let g_flat = g_logits.dot(&self.fc_weight);
        let last = tape.blocks.last().expect("at least one block").out.raw_dim();
        let mut g = g_flat.into_shape_with_order(last).expect("contiguous");
        let mut blocks = vec![];
        for (block, bt) in self.blocks.iter().zip(&tape.blocks).rev() {
            let (grads, g_in) = block.backward(bt, &g, &self.config, tape.training);
            blocks.push(grads);
            g = g_in;
        }
        blocks.reverse();
        CnnGrad { blocks, fc_weight, fc_bias }
    }
}

impl Parameters for CnnClassifier {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for b in &self.blocks {
            v.push(b.weight.as_slice().expect("standard layout"));
            v.push(b.bias.as_slice().expect("standard layout"));
            v.push(b.gamma.as_slice().expect("standard layout"));
            v.push(b.beta.as_slice().expect("standard layout"));
        }
        v.push(self.fc_weight.as_slice().expect("standard layout"));
        v.push(self.fc_bias.as_slice().expect("standard layout"));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.blocks {
            v.push(b.weight.as_slice_mut().expect("standard layout"));
            v.push(b.bias.as_slice_mut().expect("standard layout"));
            v.push(b.gamma.as_slice_mut().expect("standard layout"));
            v.push(b.beta.as_slice_mut().expect("standard layout"));
        }
        v.push(self.fc_weight.as_slice_mut().expect("standard layout"));
        v.push(self.fc_bias.as_slice_mut().expect("standard layout"));
        v
    }
}

impl Parameters for CnnGrad {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for (w, b, g, be) in &self.blocks {
            v.push(w.as_slice().expect("standard layout"));
            v.push(b.as_slice().expect("standard layout"));
            v.push(g.as_slice().expect("standard layout"));
            v.push(be.as_slice().expect("standard layout"));
        }
        v.push(self.fc_weight.as_slice().expect("standard layout"));
        v.push(self.fc_bias.as_slice().expect("standard layout"));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for (w, b, g, be) in &mut self.blocks {
            v.push(w.as_slice_mut().expect("standard layout"));
            v.push(b.as_slice_mut().expect("standard layout"));
            v.push(g.as_slice_mut().expect("standard layout"));
            v.push(be.as_slice_mut().expect("standard layout"));
        }
        v.push(self.fc_weight.as_slice_mut().expect("standard layout"));
        v.push(self.fc_bias.as_slice_mut().expect("standard layout"));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn same_padding_geometry() {
        assert_eq!(same_geometry(336, 5, 2), (168, 1));
        assert_eq!(same_geometry(48, 5, 2), (24, 1));
        assert_eq!(same_geometry(7, 5, 2), (4, 2));
    }

    #[test]
    fn outputs_are_probabilities_and_eval_leaves_state() {
        let mut rng = stream_rng(5, 0);
        let mut cnn = CnnClassifier::new(24, 3, CnnConfig::default(), &mut rng);
        let x = uniform_matrix(6, 24, 1.0, &mut rng);
        let before = cnn.clone();
        let p = cnn.predict(x.view());
        assert_eq!(cnn, before);
        for row in p.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|v| *v >= 0.0));
        }
        cnn.forward(x.view(), true);
        assert_ne!(cnn.blocks[0].running_mean, before.blocks[0].running_mean);
    }

    #[test]
    fn gradients_match_central_differences_in_training_mode() {
        let mut rng = stream_rng(8, 0);
        let config = CnnConfig { channels: vec![3, 4], kernel: 3, stride: 2 };
        let mut cnn = CnnClassifier::new(12, 3, config, &mut rng);
        for b in &mut cnn.blocks {
            b.gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
            b.beta.mapv_inplace(|_| rng.random_range(0.1..0.5));
        }
        let x = uniform_matrix(5, 12, 1.0, &mut rng);
        let w = uniform_matrix(5, 3, 1.0, &mut rng);
        let loss = |c: &CnnClassifier| {
            let mut c = c.clone();
            (c.forward(x.view(), true).0 * &w).sum()
        };
        let mut scratch = cnn.clone();
        let (_, tape) = scratch.forward(x.view(), true);
        let g = cnn.backward(&tape, w.view());
        let eps = 1e-6;
        let mut checked = 0;
        for idx in 0..cnn.n_params() {
            let base = cnn.get_flat(idx);
            let mut plus = cnn.clone();
            plus.set_flat(idx, base + eps);
            let mut minus = cnn.clone();
            minus.set_flat(idx, base - eps);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let an = g.get_flat(idx);
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-3), "param {idx}: fd {fd} an {an}");
            checked += 1;
        }
        assert!(checked > 50);
    }
}
