//! Reversible instance normalization.
//!
//! Each instance is centred and scaled by its own lookback statistics before
//! prediction, and the prediction is mapped back with the same statistics.
//! An optional per-feature affine sets the normalized mean to `alpha` and the
//! scale to `beta`.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Lookback statistics of one instance; `std = sqrt(var + eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceStats {
    pub mean: f64,
    pub std: f64,
}

/// Per-feature affine applied after standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub enabled: bool,
}

impl AffineParams {
    /// Identity affine (alpha = 0, beta = 1) for `n_features` features.
    pub fn identity(n_features: usize, enabled: bool) -> Self {
        AffineParams {
            alpha: vec![0.0; n_features],
            beta: vec![1.0; n_features],
            enabled,
        }
    }

    pub fn disabled() -> Self {
        AffineParams { alpha: Vec::new(), beta: Vec::new(), enabled: false }
    }

    pub fn n_features(&self) -> usize {
        self.alpha.len()
    }

    #[inline]
    fn get(&self, feature: usize) -> (f64, f64) {
        if self.enabled {
            (self.alpha[feature], self.beta[feature])
        } else {
            (0.0, 1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != self.beta.len() {
            return Err(Error::Shape("affine alpha/beta lengths differ".into()));
        }
        if self.enabled && self.beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidParameter("affine beta must be positive".into()));
        }
        if self.alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("affine alpha must be finite".into()));
        }
        Ok(())
    }
}

/// Normalizes a single lookback window.
pub fn norm(x: &[f64], affine: &AffineParams, feature: usize) -> (Vec<f64>, InstanceStats) {
    norm_with_eps(x, affine, feature, DEFAULT_EPS)
}

pub fn norm_with_eps(x: &[f64], affine: &AffineParams, feature: usize, eps: f64) -> (Vec<f64>, InstanceStats) {
    let stats = moments(x.iter().copied(), x.len(), eps);
    let (alpha, beta) = affine.get(feature);
    let out = x.iter().map(|v| (v - stats.mean) / stats.std * beta + alpha).collect();
    (out, stats)
}

/// Maps a normalized prediction back to the instance's original scale.
pub fn denorm(y_hat: &[f64], stats: InstanceStats, affine: &AffineParams, feature: usize) -> Vec<f64> {
    let (alpha, beta) = affine.get(feature);
    y_hat.iter().map(|y| stats.std * (y - alpha) / beta + stats.mean).collect()
}

fn moments(values: impl Iterator<Item = f64> + Clone, n: usize, eps: f64) -> InstanceStats {
    let n = n as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    InstanceStats { mean, std: (var + eps).sqrt() }
}

/// Batched RevIN over instance rows, holding the shared affine parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevIn {
    pub affine: AffineParams,
    pub eps: f64,
}

/// Gradient of a loss with respect to the affine parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrad {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl AffineGrad {
    pub fn zeros(n_features: usize) -> Self {
        AffineGrad { alpha: vec![0.0; n_features], beta: vec![0.0; n_features] }
    }

    pub fn add_assign(&mut self, other: &AffineGrad) {
        self.alpha.iter_mut().zip(&other.alpha).for_each(|(a, b)| *a += b);
        self.beta.iter_mut().zip(&other.beta).for_each(|(a, b)| *a += b);
    }
}

impl RevIn {
    pub fn new(n_features: usize, affine: bool) -> Self {
        RevIn { affine: AffineParams::identity(n_features, affine), eps: DEFAULT_EPS }
    }

    /// Normalizes every row of `x`; `feature[i]` selects the affine entry of row i.
    pub fn norm_batch(&self, x: ArrayView2<f64>, feature: &[usize]) -> (Array2<f64>, Vec<InstanceStats>) {
        let l = x.ncols();
        let mut out = Array2::zeros(x.raw_dim());
        let mut stats = Vec::with_capacity(x.nrows());
        for ((row, mut dst), &f) in x.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))).zip(feature) {
            let st = moments(row.iter().copied(), l, self.eps);
            let (alpha, beta) = self.affine.get(f);
            Zip::from(&mut dst).and(&row).for_each(|d, &v| *d = (v - st.mean) / st.std * beta + alpha);
            stats.push(st);
        }
        (out, stats)
    }

    pub fn denorm_batch(&self, y: ArrayView2<f64>, stats: &[InstanceStats], feature: &[usize]) -> Array2<f64> {
        let mut out = y.to_owned();
        for ((mut row, st), &f) in out.axis_iter_mut(Axis(0)).zip(stats).zip(feature) {
            let (alpha, beta) = self.affine.get(f);
            row.mapv_inplace(|v| st.std * (v - alpha) / beta + st.mean);
        }
        out
    }

    /// Converts a gradient w.r.t. denormalized outputs into one w.r.t. the
    /// normalized predictions (scales each row by std / beta).
    pub fn denorm_input_grad(&self, grad_y: ArrayView2<f64>, stats: &[InstanceStats], feature: &[usize]) -> Array2<f64> {
        let mut out = grad_y.to_owned();
        for ((mut row, st), &f) in out.axis_iter_mut(Axis(0)).zip(stats).zip(feature) {
            let (_, beta) = self.affine.get(f);
            row.mapv_inplace(|g| g * st.std / beta);
        }
        out
    }

    /// Affine gradient for `y = denorm(f(norm(x)))`.
    ///
    /// `grad_y` is w.r.t. the denormalized output, `y_norm` the normalized
    /// prediction, `x_norm` the normalized input and `grad_x_norm` the
    /// predictor's gradient w.r.t. its input. Zero when affine is disabled.
    pub fn affine_grad(
        &self,
        grad_y: ArrayView2<f64>,
        y_norm: ArrayView2<f64>,
        x_norm: ArrayView2<f64>,
        grad_x_norm: ArrayView2<f64>,
        stats: &[InstanceStats],
        feature: &[usize],
    ) -> AffineGrad {
        let mut grad = AffineGrad::zeros(self.affine.n_features());
        if !self.affine.enabled {
            return grad;
        }
        for i in 0..grad_y.nrows() {
            let f = feature[i];
            let (alpha, beta) = self.affine.get(f);
            let st = stats[i];
            let mut ga = 0.0;
            let mut gb = 0.0;
            for (g, yn) in grad_y.row(i).iter().zip(y_norm.row(i)) {
                ga -= g * st.std / beta;
                gb -= g * st.std * (yn - alpha) / (beta * beta);
            }
            for (gx, xn) in grad_x_norm.row(i).iter().zip(x_norm.row(i)) {
                ga += gx;
                // d x_norm / d beta = (x - mean) / std = (x_norm - alpha) / beta
                gb += gx * (xn - alpha) / beta;
            }
            grad.alpha[f] += ga;
            grad.beta[f] += gb;
        }
        grad
    }

    /// Keeps beta strictly positive after an optimizer step.
    pub fn clamp(&mut self) {
        for b in &mut self.affine.beta {
            if *b < 1e-6 {
                *b = 1e-6;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn mean_std(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
    }

    #[test]
    fn constant_input_maps_to_zeros() {
        let (out, st) = norm(&[1.0; 4], &AffineParams::disabled(), 0);
        assert!(out.iter().all(|v| v.abs() < 1e-12));
        assert_abs_diff_eq!(st.mean, 1.0);
        assert_abs_diff_eq!(st.std, 1e-5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn symmetric_pair() {
        let (out, st) = norm(&[0.0, 2.0], &AffineParams::disabled(), 0);
        assert_abs_diff_eq!(out[0], -1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(out[1], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(st.mean, 1.0);
        assert_abs_diff_eq!(st.std, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn affine_sets_target_moments() {
        let affine = AffineParams { alpha: vec![5.0], beta: vec![2.0], enabled: true };
        let (out, _) = norm(&[1.0, 2.0, 3.0, 4.0], &affine, 0);
        let (m, s) = mean_std(&out);
        assert_abs_diff_eq!(m, 5.0, epsilon = 1e-12);
        // std(x) = sqrt(1.25); the eps inside the root shrinks the scale by ~4e-6
        assert_abs_diff_eq!(s, 2.0 * (1.25f64 / (1.25 + 1e-5)).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn denorm_inverts_norm() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0];
        let affine = AffineParams::disabled();
        let (n, st) = norm(&x, &affine, 0);
        for (a, b) in denorm(&n, st, &affine, 0).iter().zip(&x) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_prediction_restores_mean() {
        let st = InstanceStats { mean: 2.5, std: 0.7 };
        assert_eq!(denorm(&[0.0; 3], st, &AffineParams::disabled(), 0), vec![2.5; 3]);
    }

    #[test]
    fn denorm_with_affine_by_hand() {
        let affine = AffineParams { alpha: vec![0.0], beta: vec![1.0], enabled: true };
        let st = InstanceStats { mean: 2.0, std: 3.0 };
        assert_eq!(denorm(&[1.0], st, &affine, 0), vec![5.0]);
        let affine = AffineParams { alpha: vec![0.5], beta: vec![4.0], enabled: true };
        // 3 * (1 - 0.5) / 4 + 2
        assert_abs_diff_eq!(denorm(&[1.0], st, &affine, 0)[0], 2.375, epsilon = 1e-15);
    }

    #[test]
    fn batch_matches_single_instance_path() {
        let mut revin = RevIn::new(2, true);
        revin.affine.alpha = vec![0.3, -0.2];
        revin.affine.beta = vec![1.5, 0.8];
        let x = array![[1.0, 4.0, 2.0, 8.0], [0.5, 0.1, -0.3, 0.9], [2.0, 2.0, 3.0, 1.0]];
        let feature = [0, 1, 1];
        let (n, stats) = revin.norm_batch(x.view(), &feature);
        for i in 0..3 {
            let (single, st) = norm(x.row(i).as_slice().unwrap(), &revin.affine, feature[i]);
            assert_eq!(st, stats[i]);
            for (a, b) in single.iter().zip(n.row(i)) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
        let back = revin.denorm_batch(n.view(), &stats, &feature);
        for (a, b) in back.iter().zip(x.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn affine_gradient_matches_finite_differences() {
        // loss = sum(w * denorm(P x_norm)) with a fixed linear "predictor" P
        let x = array![[1.0, 3.0, 2.0, 5.0], [0.2, -0.1, 0.4, 0.0]];
        let feature = [1usize, 0];
        let p = array![[0.2, -0.1, 0.4, 0.3], [0.1, 0.5, -0.2, 0.2], [0.0, 0.3, 0.3, 0.1]];
        let w = array![[0.7, -1.2, 0.4], [0.3, 0.9, -0.5]];
        let loss = |revin: &RevIn| {
            let (xn, st) = revin.norm_batch(x.view(), &feature);
            let yn = xn.dot(&p.t());
            (revin.denorm_batch(yn.view(), &st, &feature) * &w).sum()
        };
        let mut revin = RevIn::new(2, true);
        revin.affine.alpha = vec![0.2, -0.4];
        revin.affine.beta = vec![1.3, 0.7];
        let (xn, st) = revin.norm_batch(x.view(), &feature);
        let yn = xn.dot(&p.t());
        let grad_xn = revin.denorm_input_grad(w.view(), &st, &feature).dot(&p);
        let g = revin.affine_grad(w.view(), yn.view(), xn.view(), grad_xn.view(), &st, &feature);
        let h = 1e-6;
        for f in 0..2 {
            for which in 0..2 {
                let mut plus = revin.clone();
                let mut minus = revin.clone();
                let (pp, mm) = if which == 0 {
                    (&mut plus.affine.alpha[f], &mut minus.affine.alpha[f])
                } else {
                    (&mut plus.affine.beta[f], &mut minus.affine.beta[f])
                };
                *pp += h;
                *mm -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = if which == 0 { g.alpha[f] } else { g.beta[f] };
                assert_abs_diff_eq!(fd, an, epsilon = 1e-7);
            }
        }
    }
}
