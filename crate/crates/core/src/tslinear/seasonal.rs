//! Complex-domain handling of the seasonal component.
//!
//! Time indices in this module are one-based: sample `p` of the lookback is
//! rotated by `w * p` with `w = 2 pi / period`, and horizon step `q` is read
//! back against the phase `w * (q + offset)`, where `offset` is the lookback
//! length so the horizon continues the input's index line. Slices are zero
//! based, so position `i` carries index `i + 1`.

use std::f64::consts::PI;

/// Complex vector stored as separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVec {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexVec {
    pub fn zeros(len: usize) -> Self {
        ComplexVec { re: vec![0.0; len], im: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }
}

/// `(cos, sin)` of `w * (i + 1 + offset)` for `i` in `0..len`.
pub(crate) fn phase_table(len: usize, period: usize, offset: usize) -> (Vec<f64>, Vec<f64>) {
    let w = 2.0 * PI / period as f64;
    (0..len)
        .map(|i| {
            // reduce the index mod period first so long lookbacks keep full precision
            let k = ((i + 1 + offset) % period) as f64;
            let a = w * k;
            (a.cos(), a.sin())
        })
        .unzip()
}

/// `z_p = s_p * exp(j w p)`.
pub fn seasonal_to_complex(s: &[f64], period: usize) -> ComplexVec {
    let (cos, sin) = phase_table(s.len(), period, 0);
    ComplexVec {
        re: s.iter().zip(&cos).map(|(v, c)| v * c).collect(),
        im: s.iter().zip(&sin).map(|(v, sn)| v * sn).collect(),
    }
}

/// `W z + b` for `W = a + j b_mat` given as row-major `out x in` real/imag parts.
pub fn complex_linear(z: &ComplexVec, w_re: &[f64], w_im: &[f64], bias: Option<&ComplexVec>, out: usize) -> ComplexVec {
    let n = z.len();
    assert_eq!(w_re.len(), out * n, "weight shape");
    assert_eq!(w_im.len(), out * n, "weight shape");
    let mut y = ComplexVec::zeros(out);
    for q in 0..out {
        let a = &w_re[q * n..(q + 1) * n];
        let b = &w_im[q * n..(q + 1) * n];
        let mut re = 0.0;
        let mut im = 0.0;
        for p in 0..n {
            re += a[p] * z.re[p] - b[p] * z.im[p];
            im += a[p] * z.im[p] + b[p] * z.re[p];
        }
        if let Some(bias) = bias {
            re += bias.re[q];
            im += bias.im[q];
        }
        y.re[q] = re;
        y.im[q] = im;
    }
    y
}

/// Signed modulus read against the continued phase line:
/// `s_q = sign(Re(z_q * exp(-j w (q + offset)))) * |z_q|`, with sign `+1` at 0.
pub fn complex_to_real(zy: &ComplexVec, period: usize, offset: usize) -> Vec<f64> {
    let (cos, sin) = phase_table(zy.len(), period, offset);
    (0..zy.len())
        .map(|q| {
            let (re, im) = (zy.re[q], zy.im[q]);
            let modulus = re.hypot(im);
            if re * cos[q] + im * sin[q] >= 0.0 { modulus } else { -modulus }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quarter_period_rotation() {
        let z = seasonal_to_complex(&[1.0, 0.0, -1.0], 4);
        let expected = [(0.0, 1.0), (0.0, 0.0), (0.0, 1.0)];
        for (p, (re, im)) in expected.into_iter().enumerate() {
            assert_abs_diff_eq!(z.re[p], re, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im[p], im, epsilon = 1e-15);
        }
    }

    #[test]
    fn zeros_stay_zero() {
        let z = seasonal_to_complex(&[0.0; 6], 3);
        assert!(z.re.iter().chain(&z.im).all(|v| *v == 0.0));
    }

    #[test]
    fn same_phase_one_period_apart() {
        let s = [0.5, 0.2, 0.9, 0.7, 0.5, 0.4, 0.3, 0.8];
        let z = seasonal_to_complex(&s, 4);
        for p in 0..4 {
            let a0 = z.im[p].atan2(z.re[p]);
            let a1 = z.im[p + 4].atan2(z.re[p + 4]);
            assert_abs_diff_eq!(a0, a1, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(z.re[0].hypot(z.im[0]), z.re[4].hypot(z.im[4]), epsilon = 1e-15);
    }

    #[test]
    fn identity_weight_and_pure_bias() {
        let z = ComplexVec { re: vec![1.0, -2.0, 0.5], im: vec![0.3, 0.0, -1.0] };
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        assert_eq!(complex_linear(&z, &eye, &[0.0; 9], None, 3), z);
        let b = ComplexVec { re: vec![0.1, 0.2], im: vec![-0.4, 0.5] };
        let y = complex_linear(&ComplexVec::zeros(3), &[0.7; 6], &[0.2; 6], Some(&b), 2);
        assert_eq!(y, b);
    }

    #[test]
    fn positive_and_negated_rays() {
        let (period, offset) = (24, 48);
        let (cos, sin) = phase_table(5, period, offset);
        let pos = ComplexVec { re: cos.iter().map(|c| 3.0 * c).collect(), im: sin.iter().map(|s| 3.0 * s).collect() };
        for v in complex_to_real(&pos, period, offset) {
            assert_abs_diff_eq!(v, 3.0, epsilon = 1e-12);
        }
        let neg = ComplexVec { re: cos.iter().map(|c| -2.0 * c).collect(), im: sin.iter().map(|s| -2.0 * s).collect() };
        for v in complex_to_real(&neg, period, offset) {
            assert_abs_diff_eq!(v, -2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn round_trip_with_matching_phase() {
        let s = [0.3, -1.2, 0.0, 2.5, -0.01, 0.7, 1.1];
        let back = complex_to_real(&seasonal_to_complex(&s, 5), 5, 0);
        for (a, b) in back.iter().zip(&s) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }
}
