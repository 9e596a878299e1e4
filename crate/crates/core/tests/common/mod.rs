#![allow(dead_code)]

use cats_core::InstanceBatch;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth lookback: level + linear drift + a few sinusoids, randomly scaled.
pub fn smooth_signal(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let level: f64 = rng.sample::<f64, _>(StandardNormal) * 2.0;
    let drift = rng.random_range(-3.0..3.0);
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.sample::<f64, _>(StandardNormal) * 0.5, rng.random_range(1.0..6.0), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    let scale = rng.random_range(0.5..2.0);
    (0..len)
        .map(|i| {
            let u = i as f64 / len as f64;
            let w: f64 = waves.iter().map(|(a, f, p)| a * (std::f64::consts::TAU * f * u + p).sin()).sum();
            level + scale * (drift * (u - 0.5) + w)
        })
        .collect()
}

/// Standardized difference between the second-half and first-half means.
pub fn slope_score(x: &[f64]) -> f64 {
    let half = x.len() / 2;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let m = mean(x);
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt().max(1e-12);
    (mean(&x[half..]) - mean(&x[..half])) / sd
}

/// Two generating maps with unit row sums: class 0 repeats the last
/// `horizon` steps, class 1 mirrors the lookback backwards from its end.
pub fn generating_map(class: usize, x: &[f64], horizon: usize) -> Vec<f64> {
    let l = x.len();
    match class {
        0 => (0..horizon).map(|h| x[l - horizon + h]).collect(),
        _ => (0..horizon).map(|h| x[l - 1 - h]).collect(),
    }
}

/// Instances whose class is the sign of their slope score (with a margin),
/// targets from the class's generating map plus Gaussian noise.
pub fn two_map_instances(n: usize, lookback: usize, horizon: usize, sigma: f64, margin: f64, seed: u64) -> (InstanceBatch, Vec<usize>) {
    let mut rng = rng(seed);
    let mut x = Array2::zeros((n, lookback));
    let mut y = Array2::zeros((n, horizon));
    let mut classes = Vec::with_capacity(n);
    let mut filled = 0;
    while filled < n {
        let xs = smooth_signal(lookback, &mut rng);
        let score = slope_score(&xs);
        if score.abs() < margin {
            continue;
        }
        let class = usize::from(score < 0.0);
        let ys = generating_map(class, &xs, horizon);
        for (j, v) in xs.iter().enumerate() {
            x[(filled, j)] = *v;
        }
        for (j, v) in ys.iter().enumerate() {
            y[(filled, j)] = v + sigma * rng.sample::<f64, _>(StandardNormal);
        }
        classes.push(class);
        filled += 1;
    }
    (InstanceBatch { x, y, feature: vec![0; n] }, classes)
}

/// Fraction of routed labels matching the truth under the best relabelling
/// of two classes.
pub fn two_class_accuracy(routed: &[usize], truth: &[usize]) -> f64 {
    let same = routed.iter().zip(truth).filter(|(a, b)| a == b).count();
    let n = truth.len() as f64;
    (same as f64 / n).max(1.0 - same as f64 / n)
}
