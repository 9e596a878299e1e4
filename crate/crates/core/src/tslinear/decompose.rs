use crate::error::{Error, Result};

/// Trend and seasonal parts of one lookback window.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedSeries {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
}

pub(crate) fn check_window(len: usize, window: usize) -> Result<()> {
    if window.is_multiple_of(2) || window < 1 {
        return Err(Error::InvalidParameter(format!(
            "moving-average window must be odd, got {window}"
        )));
    }
    if window > len {
        return Err(Error::InvalidParameter(format!(
            "moving-average window {window} exceeds series length {len}"
        )));
    }
    Ok(())
}

/// Centred moving average with the end values replicated `(window - 1) / 2`
/// times on each side; the seasonal part is the remainder.
pub fn decompose(x: &[f64], window: usize) -> Result<DecomposedSeries> {
    check_window(x.len(), window)?;
    let mut trend = vec![0.0; x.len()];
    moving_average(x, window, &mut trend);
    let seasonal = x.iter().zip(&trend).map(|(v, t)| v - t).collect();
    Ok(DecomposedSeries { trend, seasonal })
}

pub(crate) fn moving_average(x: &[f64], window: usize, out: &mut [f64]) {
    let n = x.len() as isize;
    let half = (window / 2) as isize;
    let inv = 1.0 / window as f64;
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        let mut acc = 0.0;
        for j in i - half..=i + half {
            acc += x[j.clamp(0, n - 1) as usize];
        }
        *o = acc * inv;
    }
}

/// Adjoint of [`moving_average`]: accumulates `grad_trend` into `grad_x`.
pub(crate) fn moving_average_adjoint(grad_trend: &[f64], window: usize, grad_x: &mut [f64]) {
    let n = grad_x.len() as isize;
    let half = (window / 2) as isize;
    let inv = 1.0 / window as f64;
    for (i, g) in grad_trend.iter().enumerate() {
        let i = i as isize;
        let g = g * inv;
        for j in i - half..=i + half {
            grad_x[j.clamp(0, n - 1) as usize] += g;
        }
    }
}
