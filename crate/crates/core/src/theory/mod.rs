//! Fixed-design linear regression lab: OLS, Mahalanobis excess risk, and
//! Monte Carlo estimates of the bias and variance of per-class, pooled and
//! per-feature estimators against their closed forms.
//!
//! Noise is Gaussian with mean 0 and the class's standard deviation. Designs
//! are drawn once and held fixed across noise trials.

mod engine;
mod ols;
mod report;
mod sweep;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub use engine::{
    empirical_risk, mc_validate_thm1, mc_validate_thm2, simulate, CheckResult, EmpiricalRisk, RiskReport,
    MIN_TRIALS,
};
pub use ols::{ols_fit, OlsSolver, CONDITION_CAP};
pub use report::{checks_table, report_table};
pub use sweep::{channel_design_sweep, SweepConfig, SweepReport};

/// One class of a linear model `y = Xθ* + ε` with a fixed design.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassSpec {
    pub theta_star: DVector<f64>,
    /// `rows × L` design.
    pub design: DMatrix<f64>,
    pub sigma: f64,
}

impl LinearClassSpec {
    pub fn new(theta_star: DVector<f64>, design: DMatrix<f64>, sigma: f64) -> Result<Self> {
        if design.ncols() != theta_star.len() {
            return Err(Error::Shape(format!(
                "design has {} columns, parameter has {} entries",
                design.ncols(),
                theta_star.len()
            )));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise std must be finite and non-negative, got {sigma}")));
        }
        Ok(LinearClassSpec { theta_star, design, sigma })
    }

    pub fn rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    /// Gram matrix `XᵀX`.
    pub fn psi(&self) -> DMatrix<f64> {
        self.design.transpose() * &self.design
    }
}

/// `(1/N)(θ − θ*)ᵀ Ψ (θ − θ*)`.
pub fn mahalanobis_excess(theta: &DVector<f64>, theta_star: &DVector<f64>, psi: &DMatrix<f64>, n: usize) -> f64 {
    let d = theta - theta_star;
    (d.transpose() * psi * &d)[(0, 0)] / n as f64
}

/// Population parameter of a single model fitted to all classes jointly:
/// `(Σ Ψ_k)⁻¹ Σ Ψ_k θ*_k`.
pub fn theta_bar(specs: &[LinearClassSpec]) -> Result<DVector<f64>> {
    let first = specs.first().ok_or_else(|| Error::InvalidParameter("no classes given".into()))?;
    let dim = first.dim();
    let mut pooled = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for spec in specs {
        if spec.dim() != dim {
            return Err(Error::Shape("classes disagree on the parameter dimension".into()));
        }
        let psi = spec.psi();
        rhs += &psi * &spec.theta_star;
        pooled += psi;
    }
    solve_spd(pooled, &rhs)
}

/// Solves `A x = b` for symmetric positive definite `A`, rejecting matrices
/// whose condition number exceeds [`CONDITION_CAP`].
pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = a.clone().symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(0.0, f64::max);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition.is_nan() || condition > CONDITION_CAP {
        return Err(Error::IllConditioned { condition });
    }
    let chol = a.cholesky().ok_or(Error::IllConditioned { condition })?;
    Ok(chol.solve(b))
}

/// `rows × cols` matrix of independent standard normal entries.
pub fn gaussian_design(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Sizes of `parts` nearly equal groups of `total`, remainder to the first.
pub(crate) fn even_sizes(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

/// `classes` linear classes over `lookback` inputs with `instances` rows in
/// total and Gaussian designs. Parameters are `base + heterogeneity · z_k`
/// with standard normal `base` and `z_k`, so heterogeneity 0 gives identical
/// classes.
pub fn synthetic_classes(
    classes: usize,
    lookback: usize,
    instances: usize,
    sigma: f64,
    heterogeneity: f64,
    seed: u64,
) -> Result<Vec<LinearClassSpec>> {
    if classes == 0 || lookback == 0 {
        return Err(Error::InvalidParameter("classes and lookback must be positive".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let base = DVector::from_fn(lookback, |_, _| rng.sample::<f64, _>(StandardNormal));
    let thetas: Vec<DVector<f64>> = (0..classes)
        .map(|_| &base + DVector::from_fn(lookback, |_, _| rng.sample::<f64, _>(StandardNormal)) * heterogeneity)
        .collect();
    even_sizes(instances, classes)
        .into_iter()
        .zip(thetas)
        .map(|(rows, theta)| LinearClassSpec::new(theta, gaussian_design(rows, lookback, &mut rng), sigma))
        .collect()
}
