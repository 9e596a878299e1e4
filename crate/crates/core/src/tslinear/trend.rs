//! Trend decoupling into per-step states and recoupling with a truncated
//! geometric kernel.
//!
//! If `t_i = sum_{k<=i} alpha^(i-k) h_k` then `h_1 = t_1` and
//! `h_i = t_i - alpha * t_(i-1)`. Recoupling truncates the geometric sum after
//! `m + 1` terms, which is a convolution with `[alpha^m, ..., alpha, 1]`.

/// `h_1 = t_1`, `h_i = t_i - alpha * t_(i-1)`.
pub fn trend_decouple(t: &[f64], alpha: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(t.len());
    if let Some(&first) = t.first() {
        h.push(first);
    }
    h.extend(t.windows(2).map(|w| w[1] - alpha * w[0]));
    h
}

/// Convolves `[h_in_tail, h_out]` (valid mode) with `[alpha^m, ..., alpha, 1]`;
/// output step q is `sum_{i=0}^{m} alpha^i * c[m + q - i]`.
pub fn trend_recouple(h_out: &[f64], h_in_tail: &[f64], alpha: f64, m: usize) -> Vec<f64> {
    assert_eq!(h_in_tail.len(), m, "recoupling tail must hold m states");
    let kernel = geometric_kernel(alpha, m);
    let ctx = |j: usize| if j < m { h_in_tail[j] } else { h_out[j - m] };
    (0..h_out.len())
        .map(|q| kernel.iter().enumerate().map(|(i, a)| a * ctx(m + q - i)).sum())
        .collect()
}

/// `alpha^i` for `i = 0..=m` (lag order, i.e. the kernel reversed).
pub(crate) fn geometric_kernel(alpha: f64, m: usize) -> Vec<f64> {
    std::iter::successors(Some(1.0), |p| Some(p * alpha)).take(m + 1).collect()
}

/// `t_i = sum_{k<=i} alpha^(i-k) h_k`, the exact exponential-smoothing trend.
pub fn synthesize_trend(h: &[f64], alpha: f64) -> Vec<f64> {
    let mut acc = 0.0;
    h.iter()
        .map(|v| {
            acc = alpha * acc + v;
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn decouple_constant() {
        assert_eq!(trend_decouple(&[1.0, 1.0, 1.0], 0.5), vec![1.0, 0.5, 0.5]);
    }

    #[test]
    fn tiny_alpha_is_identity() {
        let t = [0.3, -2.0, 4.5];
        for (a, b) in trend_decouple(&t, 1e-300).iter().zip(&t) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn recouple_impulse() {
        assert_eq!(trend_recouple(&[1.0, 0.0, 0.0], &[0.0, 0.0], 0.5, 2), vec![1.0, 0.5, 0.25]);
        assert_eq!(trend_recouple(&[0.0; 4], &[0.0; 3], 0.5, 3), vec![0.0; 4]);
    }

    #[test]
    fn recouple_uses_input_tail() {
        // tail [1, 2], out [0, 0]: q=0 -> 0.5*2 + 0.25*1, q=1 -> 0.25*2
        let y = trend_recouple(&[0.0, 0.0], &[1.0, 2.0], 0.5, 2);
        assert_eq!(y, vec![1.25, 0.5]);
    }

    #[test]
    fn truncation_error_is_bounded() {
        let (alpha, m, l, horizon) = (0.5, 10, 40, 12);
        let h: Vec<f64> = (0..l + horizon).map(|i| ((i * 37) % 11) as f64 / 5.0 - 1.0).collect();
        let t = synthesize_trend(&h, alpha);
        let y = trend_recouple(&h[l..], &h[l - m..l], alpha, m);
        let max_h = h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let bound = alpha.powi(m as i32 + 1) / (1.0 - alpha) * max_h;
        for (a, b) in y.iter().zip(&t[l..]) {
            assert!((a - b).abs() <= bound);
        }
    }

    proptest! {
        #[test]
        fn decouple_inverts_synthesis(h in prop::collection::vec(-10.0f64..10.0, 1..200), alpha in 0.01f64..0.99) {
            let back = trend_decouple(&synthesize_trend(&h, alpha), alpha);
            for (a, b) in back.iter().zip(&h) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
