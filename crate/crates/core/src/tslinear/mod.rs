//! The TSLinear predictor.
//!
//! The normalized lookback is split into a moving-average trend and a
//! seasonal remainder. The seasonal part is rotated onto the unit circle at
//! the configured period, mapped by a complex linear layer and read back as a
//! signed modulus. The trend part is decoupled into exponential-smoothing
//! states, mapped linearly to horizon states and recoupled with a truncated
//! geometric kernel. The two forecasts are summed.

mod decompose;
mod seasonal;
mod trend;

pub use decompose::{decompose, DecomposedSeries};
pub use seasonal::{complex_linear, complex_to_real, seasonal_to_complex, ComplexVec};
pub use trend::{synthesize_trend, trend_decouple, trend_recouple};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::rng::uniform_matrix;
use decompose::{check_window, moving_average, moving_average_adjoint};
use seasonal::phase_table;
use trend::geometric_kernel;

/// Shapes and fixed constants of a predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsLinearConfig {
    pub lookback: usize,
    pub horizon: usize,
    /// Seasonal period T; the rotation frequency is 2 pi / T.
    pub period: usize,
    /// Moving-average width of the decomposition (odd).
    pub ma_window: usize,
    /// Exponential-smoothing constant of the trend states.
    pub alpha: f64,
    /// Recoupling kernel length minus one.
    pub m: usize,
    /// Whether the complex layer carries a bias.
    pub complex_bias: bool,
}

impl TsLinearConfig {
    pub fn new(lookback: usize, horizon: usize) -> Self {
        TsLinearConfig {
            lookback,
            horizon,
            period: 24,
            ma_window: 25,
            alpha: 0.5,
            m: 10,
            complex_bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.lookback < 2 || self.horizon < 1 {
            return bad(format!("need lookback >= 2 and horizon >= 1, got L={} H={}", self.lookback, self.horizon));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.m < 1 || self.m > self.lookback {
            return bad(format!("m must lie in [1, L], got {}", self.m));
        }
        if self.period < 2 {
            return bad(format!("period must be at least 2, got {}", self.period));
        }
        if self.ma_window < 3 {
            return bad(format!("moving-average window must be at least 3, got {}", self.ma_window));
        }
        check_window(self.lookback, self.ma_window)
    }
}

/// Trainable state of one predictor. Matrices are `horizon x lookback`.
#[derive(Debug, Clone, PartialEq)]
pub struct TsLinear {
    pub config: TsLinearConfig,
    pub seasonal_re: Array2<f64>,
    pub seasonal_im: Array2<f64>,
    pub seasonal_bias_re: Array1<f64>,
    pub seasonal_bias_im: Array1<f64>,
    pub trend_weight: Array2<f64>,
    pub trend_bias: Array1<f64>,
}

/// Gradient of a scalar loss w.r.t. every [`TsLinear`] tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TsLinearGrad {
    pub seasonal_re: Array2<f64>,
    pub seasonal_im: Array2<f64>,
    pub seasonal_bias_re: Array1<f64>,
    pub seasonal_bias_im: Array1<f64>,
    pub trend_weight: Array2<f64>,
    pub trend_bias: Array1<f64>,
}

/// Intermediates of a batched forward pass.
#[derive(Debug, Clone)]
pub struct TsLinearTape {
    z_re: Array2<f64>,
    z_im: Array2<f64>,
    zy_re: Array2<f64>,
    zy_im: Array2<f64>,
    states: Array2<f64>,
    in_cos: Vec<f64>,
    in_sin: Vec<f64>,
    out_cos: Vec<f64>,
    out_sin: Vec<f64>,
}

fn ensure_finite(a: &Array2<f64>, stage: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { stage })
    }
}

impl TsLinear {
    /// Weights uniform on `[-1/L, 1/L]`, biases zero.
    pub fn new(config: TsLinearConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (h, l) = (config.horizon, config.lookback);
        let bound = 1.0 / l as f64;
        Ok(TsLinear {
            seasonal_re: uniform_matrix(h, l, bound, rng),
            seasonal_im: uniform_matrix(h, l, bound, rng),
            seasonal_bias_re: Array1::zeros(h),
            seasonal_bias_im: Array1::zeros(h),
            trend_weight: uniform_matrix(h, l, bound, rng),
            trend_bias: Array1::zeros(h),
            config,
        })
    }

    pub fn zeros(config: TsLinearConfig) -> Result<Self> {
        config.validate()?;
        let (h, l) = (config.horizon, config.lookback);
        Ok(TsLinear {
            seasonal_re: Array2::zeros((h, l)),
            seasonal_im: Array2::zeros((h, l)),
            seasonal_bias_re: Array1::zeros(h),
            seasonal_bias_im: Array1::zeros(h),
            trend_weight: Array2::zeros((h, l)),
            trend_bias: Array1::zeros(h),
            config,
        })
    }

    /// Checks tensor shapes and finiteness, e.g. after loading a checkpoint.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let (h, l) = (self.config.horizon, self.config.lookback);
        let mats = [&self.seasonal_re, &self.seasonal_im, &self.trend_weight];
        let vecs = [&self.seasonal_bias_re, &self.seasonal_bias_im, &self.trend_bias];
        if mats.iter().any(|m| m.dim() != (h, l)) || vecs.iter().any(|v| v.len() != h) {
            return Err(Error::Shape("predictor tensors do not match the configured L and H".into()));
        }
        if !self.all_finite() {
            return Err(Error::InvalidParameter("predictor has non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn lookback(&self) -> usize {
        self.config.lookback
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    /// Forecasts every row of `x_norm` (n x L), keeping what backward needs.
    pub fn forward(&self, x_norm: ArrayView2<f64>) -> Result<(Array2<f64>, TsLinearTape)> {
        let cfg = &self.config;
        let (l, h, m) = (cfg.lookback, cfg.horizon, cfg.m);
        if x_norm.ncols() != l {
            return Err(Error::Shape(format!("expected {l} lookback columns, got {}", x_norm.ncols())));
        }
        let n = x_norm.nrows();

        let mut trend = Array2::zeros((n, l));
        for (x, mut t) in x_norm.outer_iter().zip(trend.outer_iter_mut()) {
            let x = x.to_vec();
            moving_average(&x, cfg.ma_window, t.as_slice_mut().expect("standard layout"));
        }
        let seasonal = &x_norm - &trend;
        ensure_finite(&trend, "decompose")?;

        // seasonal path
        let (in_cos, in_sin) = phase_table(l, cfg.period, 0);
        let (out_cos, out_sin) = phase_table(h, cfg.period, l);
        let in_cos_a = Array1::from(in_cos.clone());
        let in_sin_a = Array1::from(in_sin.clone());
        let z_re = &seasonal * &in_cos_a;
        let z_im = &seasonal * &in_sin_a;
        let mut zy_re = z_re.dot(&self.seasonal_re.t()) - z_im.dot(&self.seasonal_im.t());
        let mut zy_im = z_im.dot(&self.seasonal_re.t()) + z_re.dot(&self.seasonal_im.t());
        if cfg.complex_bias {
            zy_re += &self.seasonal_bias_re;
            zy_im += &self.seasonal_bias_im;
        }
        ensure_finite(&zy_re, "complex_linear")?;
        ensure_finite(&zy_im, "complex_linear")?;
        let mut out = Array2::zeros((n, h));
        Zip::from(out.rows_mut()).and(zy_re.rows()).and(zy_im.rows()).for_each(|mut o, re, im| {
            for q in 0..h {
                let modulus = re[q].hypot(im[q]);
                o[q] = if re[q] * out_cos[q] + im[q] * out_sin[q] >= 0.0 { modulus } else { -modulus };
            }
        });

        // trend path
        let mut states = Array2::zeros((n, l));
        for (t, mut s) in trend.outer_iter().zip(states.outer_iter_mut()) {
            s[0] = t[0];
            for i in 1..l {
                s[i] = t[i] - cfg.alpha * t[i - 1];
            }
        }
        let state_out = states.dot(&self.trend_weight.t()) + &self.trend_bias;
        ensure_finite(&state_out, "trend_map")?;
        let kernel = geometric_kernel(cfg.alpha, m);
        for ((mut o, s_in), s_out) in out.outer_iter_mut().zip(states.outer_iter()).zip(state_out.outer_iter()) {
            for q in 0..h {
                let mut acc = 0.0;
                for (i, k) in kernel.iter().enumerate() {
                    // context index m + q - i; below m reads the input tail
                    let v = if q >= i { s_out[q - i] } else { s_in[l + q - i] };
                    acc += k * v;
                }
                o[q] += acc;
            }
        }
        ensure_finite(&out, "output")?;

        Ok((
            out,
            TsLinearTape { z_re, z_im, zy_re, zy_im, states, in_cos, in_sin, out_cos, out_sin },
        ))
    }

    pub fn predict(&self, x_norm: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward(x_norm).map(|(y, _)| y)
    }

    /// Reverse pass. Returns parameter gradients and the gradient w.r.t. the
    /// normalized input. The sign of the seasonal read-out is treated as a
    /// constant; the modulus is differentiated exactly (zero at the origin).
    pub fn backward(&self, tape: &TsLinearTape, grad_y: ArrayView2<f64>) -> (TsLinearGrad, Array2<f64>) {
        let cfg = &self.config;
        let (l, h, m) = (cfg.lookback, cfg.horizon, cfg.m);
        let n = grad_y.nrows();

        // seasonal path
        let mut g_re = Array2::zeros((n, h));
        let mut g_im = Array2::zeros((n, h));
        Zip::from(g_re.rows_mut())
            .and(g_im.rows_mut())
            .and(tape.zy_re.rows())
            .and(tape.zy_im.rows())
            .and(grad_y.rows())
            .for_each(|mut gr, mut gi, re, im, g| {
                for q in 0..h {
                    let modulus = re[q].hypot(im[q]);
                    if modulus > 0.0 {
                        let sign = if re[q] * tape.out_cos[q] + im[q] * tape.out_sin[q] >= 0.0 { 1.0 } else { -1.0 };
                        let s = sign * g[q] / modulus;
                        gr[q] = s * re[q];
                        gi[q] = s * im[q];
                    }
                }
            });
        let seasonal_re = g_re.t().dot(&tape.z_re) + g_im.t().dot(&tape.z_im);
        let seasonal_im = g_im.t().dot(&tape.z_re) - g_re.t().dot(&tape.z_im);
        let (seasonal_bias_re, seasonal_bias_im) = if cfg.complex_bias {
            (g_re.sum_axis(Axis(0)), g_im.sum_axis(Axis(0)))
        } else {
            (Array1::zeros(h), Array1::zeros(h))
        };
        let g_zre = g_re.dot(&self.seasonal_re) + g_im.dot(&self.seasonal_im);
        let g_zim = g_im.dot(&self.seasonal_re) - g_re.dot(&self.seasonal_im);
        let in_cos = Array1::from(tape.in_cos.clone());
        let in_sin = Array1::from(tape.in_sin.clone());
        let g_seasonal = &g_zre * &in_cos + &g_zim * &in_sin;

        // trend path: adjoint of the recoupling convolution
        let kernel = geometric_kernel(cfg.alpha, m);
        let mut g_state_out = Array2::zeros((n, h));
        let mut g_states = Array2::zeros((n, l));
        for ((g, mut go), mut gs) in grad_y.outer_iter().zip(g_state_out.outer_iter_mut()).zip(g_states.outer_iter_mut()) {
            for q in 0..h {
                for (i, k) in kernel.iter().enumerate() {
                    if q >= i {
                        go[q - i] += k * g[q];
                    } else {
                        gs[l + q - i] += k * g[q];
                    }
                }
            }
        }
        let trend_weight = g_state_out.t().dot(&tape.states);
        let trend_bias = g_state_out.sum_axis(Axis(0));
        g_states += &g_state_out.dot(&self.trend_weight);

        // decoupling and decomposition adjoints
        let mut grad_x = g_seasonal.clone();
        let mut g_trend = vec![0.0; l];
        let mut g_x_row = vec![0.0; l];
        for ((gs, g_seas), mut gx) in g_states.outer_iter().zip(g_seasonal.outer_iter()).zip(grad_x.outer_iter_mut()) {
            for i in 0..l {
                let next = if i + 1 < l { gs[i + 1] } else { 0.0 };
                // trend receives d/dt from the states, minus what flowed through seasonal = x - trend
                g_trend[i] = gs[i] - cfg.alpha * next - g_seas[i];
            }
            g_x_row.iter_mut().for_each(|v| *v = 0.0);
            moving_average_adjoint(&g_trend, cfg.ma_window, &mut g_x_row);
            for i in 0..l {
                gx[i] += g_x_row[i];
            }
        }

        (
            TsLinearGrad { seasonal_re, seasonal_im, seasonal_bias_re, seasonal_bias_im, trend_weight, trend_bias },
            grad_x,
        )
    }
}

impl TsLinearGrad {
    pub fn zeros_like(model: &TsLinear) -> Self {
        let (h, l) = (model.horizon(), model.lookback());
        TsLinearGrad {
            seasonal_re: Array2::zeros((h, l)),
            seasonal_im: Array2::zeros((h, l)),
            seasonal_bias_re: Array1::zeros(h),
            seasonal_bias_im: Array1::zeros(h),
            trend_weight: Array2::zeros((h, l)),
            trend_bias: Array1::zeros(h),
        }
    }
}

macro_rules! tslinear_tensors {
    ($t:ty) => {
        impl Parameters for $t {
            fn tensors(&self) -> Vec<&[f64]> {
                vec![
                    self.seasonal_re.as_slice().expect("standard layout"),
                    self.seasonal_im.as_slice().expect("standard layout"),
                    self.seasonal_bias_re.as_slice().expect("standard layout"),
                    self.seasonal_bias_im.as_slice().expect("standard layout"),
                    self.trend_weight.as_slice().expect("standard layout"),
                    self.trend_bias.as_slice().expect("standard layout"),
                ]
            }

            fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
                vec![
                    self.seasonal_re.as_slice_mut().expect("standard layout"),
                    self.seasonal_im.as_slice_mut().expect("standard layout"),
                    self.seasonal_bias_re.as_slice_mut().expect("standard layout"),
                    self.seasonal_bias_im.as_slice_mut().expect("standard layout"),
                    self.trend_weight.as_slice_mut().expect("standard layout"),
                    self.trend_bias.as_slice_mut().expect("standard layout"),
                ]
            }
        }
    };
}

tslinear_tensors!(TsLinear);
tslinear_tensors!(TsLinearGrad);
