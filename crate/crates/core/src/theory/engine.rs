use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ols::OlsSolver;
use super::{mahalanobis_excess, theta_bar, LinearClassSpec};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub const MIN_TRIALS: usize = 2;

const RELATIVE_TOLERANCE: f64 = 0.05;
pub(crate) const STANDARD_ERRORS: f64 = 3.0;
pub(crate) const ABSOLUTE_FLOOR: f64 = 1e-15;

/// Monte Carlo estimate of the excess risk of one estimator design, split
/// into bias and variance parts, with the matching closed forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub design: String,
    pub bias_part: f64,
    pub variance_part: f64,
    pub excess_mean: f64,
    pub closed_form_bias: f64,
    pub closed_form_variance: f64,
    pub bias_se: f64,
    pub variance_se: f64,
    pub excess_se: f64,
    pub trials: usize,
    pub seed: u64,
    /// Mean estimate of each group's parameters over the trials.
    pub group_means: Vec<Vec<f64>>,
    /// Standard error of each entry of `group_means`.
    pub group_mean_se: Vec<Vec<f64>>,
    /// Population parameter each group's estimator is unbiased for.
    pub group_targets: Vec<Vec<f64>>,
}

/// Outcome of comparing one empirical quantity against its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub empirical: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    /// Passes when `|empirical − expected|` is within the larger of 5% of
    /// `expected` and three standard errors.
    pub fn monte_carlo(name: impl Into<String>, empirical: f64, expected: f64, se: f64) -> Self {
        let tolerance = (RELATIVE_TOLERANCE * expected.abs()).max(STANDARD_ERRORS * se).max(ABSOLUTE_FLOOR);
        CheckResult {
            name: name.into(),
            empirical,
            expected,
            tolerance,
            passed: (empirical - expected).abs() <= tolerance,
        }
    }
}

impl RiskReport {
    pub fn closed_form_excess(&self) -> f64 {
        self.closed_form_bias + self.closed_form_variance
    }

    /// Excess, bias and variance checks against the closed forms.
    pub fn checks(&self) -> Vec<CheckResult> {
        vec![
            CheckResult::monte_carlo(format!("{}/excess", self.design), self.excess_mean, self.closed_form_excess(), self.excess_se),
            CheckResult::monte_carlo(format!("{}/bias", self.design), self.bias_part, self.closed_form_bias, self.bias_se),
            CheckResult::monte_carlo(
                format!("{}/variance", self.design),
                self.variance_part,
                self.closed_form_variance,
                self.variance_se,
            ),
        ]
    }

    /// Whether every group's mean estimate lies within three standard errors
    /// of its target, component by component.
    pub fn estimator_means_on_target(&self) -> bool {
        self.group_means.iter().zip(&self.group_mean_se).zip(&self.group_targets).all(|((mean, se), target)| {
            mean.iter()
                .zip(se)
                .zip(target)
                .all(|((m, s), t)| (m - t).abs() <= (STANDARD_ERRORS * s).max(ABSOLUTE_FLOOR * (1.0 + t.abs())))
        })
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::InsufficientTrials { required: MIN_TRIALS, got: trials });
    }
    Ok(())
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

struct Group {
    cells: Vec<usize>,
    solver: OlsSolver,
    psi: DMatrix<f64>,
    target: DVector<f64>,
}

/// Runs `trials` noise draws over fixed designs. Each entry of `groups` lists
/// cells that share one OLS estimator fitted on their stacked rows; every cell
/// must belong to exactly one group.
pub fn simulate(
    design: &str,
    specs: &[LinearClassSpec],
    groups: &[Vec<usize>],
    trials: usize,
    seed: u64,
) -> Result<RiskReport> {
    check_trials(trials)?;
    let dim = specs.first().ok_or_else(|| Error::InvalidParameter("no classes given".into()))?.dim();
    if specs.iter().any(|s| s.dim() != dim) {
        return Err(Error::Shape("classes disagree on the parameter dimension".into()));
    }
    let mut seen = vec![false; specs.len()];
    for &c in groups.iter().flatten() {
        if c >= specs.len() || std::mem::replace(&mut seen[c], true) {
            return Err(Error::InvalidParameter(format!("cell {c} is out of range or grouped twice")));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidParameter("every cell must belong to a group".into()));
    }

    let total_rows: usize = specs.iter().map(LinearClassSpec::rows).sum();
    let psis: Vec<DMatrix<f64>> = specs.iter().map(LinearClassSpec::psi).collect();
    let clean: Vec<DVector<f64>> = specs.iter().map(|s| &s.design * &s.theta_star).collect();

    let mut prepared = Vec::with_capacity(groups.len());
    for cells in groups {
        let rows: usize = cells.iter().map(|&c| specs[c].rows()).sum();
        if rows <= dim {
            return Err(Error::InvalidParameter(format!(
                "group of cells {cells:?} has {rows} rows, needs more than {dim}"
            )));
        }
        let mut stacked = DMatrix::zeros(rows, dim);
        let mut at = 0;
        for &c in cells {
            let x = &specs[c].design;
            stacked.rows_mut(at, x.nrows()).copy_from(x);
            at += x.nrows();
        }
        let members: Vec<LinearClassSpec> = cells.iter().map(|&c| specs[c].clone()).collect();
        prepared.push(Group {
            cells: cells.clone(),
            solver: OlsSolver::new(&stacked)?,
            psi: cells.iter().fold(DMatrix::zeros(dim, dim), |acc, &c| acc + &psis[c]),
            target: theta_bar(&members)?,
        });
    }

    let n = total_rows as f64;
    let closed_form_bias = prepared
        .iter()
        .map(|g| g.cells.iter().map(|&c| mahalanobis_excess(&g.target, &specs[c].theta_star, &psis[c], total_rows)).sum::<f64>())
        .sum();
    // E[(θ̂ − θ̄)ᵀ Ψ_g (θ̂ − θ̄)] = tr(Ψ_g⁻¹ Σ σ_c² Ψ_c), which is L σ² for a common σ.
    let mut closed_form_variance = 0.0;
    for g in &prepared {
        let weighted = g.cells.iter().fold(DMatrix::zeros(dim, dim), |acc, &c| acc + &psis[c] * specs[c].sigma.powi(2));
        let chol = g.psi.clone().cholesky().ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
        closed_form_variance += chol.solve(&weighted).trace() / n;
    }

    let per_trial: Vec<(Vec<DVector<f64>>, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(seed, trial as u64 + 1);
            let responses: Vec<DVector<f64>> = specs
                .iter()
                .zip(&clean)
                .map(|(s, y)| y + DVector::from_fn(y.len(), |_, _| s.sigma * rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let mut estimates = Vec::with_capacity(prepared.len());
            let mut excess = 0.0;
            for g in &prepared {
                let mut stacked = DVector::zeros(g.solver.rows());
                let mut at = 0;
                for &c in &g.cells {
                    stacked.rows_mut(at, responses[c].len()).copy_from(&responses[c]);
                    at += responses[c].len();
                }
                let estimate = g.solver.solve(&stacked)?;
                excess += g
                    .cells
                    .iter()
                    .map(|&c| mahalanobis_excess(&estimate, &specs[c].theta_star, &psis[c], total_rows))
                    .sum::<f64>();
                estimates.push(estimate);
            }
            Ok((estimates, excess))
        })
        .collect::<Result<_>>()?;

    let t = trials as f64;
    let means: Vec<DVector<f64>> = (0..prepared.len())
        .map(|gi| per_trial.iter().fold(DVector::zeros(dim), |acc, (e, _)| acc + &e[gi]) / t)
        .collect();

    let spread: Vec<f64> = per_trial
        .iter()
        .map(|(estimates, _)| {
            prepared
                .iter()
                .zip(estimates.iter().zip(&means))
                .map(|(g, (e, m))| {
                    let d = e - m;
                    (d.transpose() * &g.psi * &d)[(0, 0)] / n
                })
                .sum()
        })
        .collect();
    let (spread_mean, spread_se) = mean_and_se(&spread);
    let bessel = t / (t - 1.0);
    let variance_part = spread_mean * bessel;
    let variance_se = spread_se * bessel;

    // The plug-in bias of the mean estimate carries variance_part / trials of
    // noise on average; it is subtracted and its own error added to the SE.
    let raw_bias: f64 = prepared
        .iter()
        .zip(&means)
        .map(|(g, m)| g.cells.iter().map(|&c| mahalanobis_excess(m, &specs[c].theta_star, &psis[c], total_rows)).sum::<f64>())
        .sum();
    let bias_part = (raw_bias - variance_part / t).max(0.0);
    let gradients: Vec<DVector<f64>> = prepared
        .iter()
        .zip(&means)
        .map(|(g, m)| g.cells.iter().fold(DVector::zeros(dim), |acc, &c| acc + &psis[c] * (m - &specs[c].theta_star)) * (2.0 / n))
        .collect();
    let linear: Vec<f64> = per_trial
        .iter()
        .map(|(estimates, _)| estimates.iter().zip(&means).zip(&gradients).map(|((e, m), g)| g.dot(&(e - m))).sum())
        .collect();
    let bias_se = mean_and_se(&linear).1 + variance_part / t;

    let excess: Vec<f64> = per_trial.iter().map(|(_, e)| *e).collect();
    let (excess_mean, excess_se) = mean_and_se(&excess);

    let group_mean_se = (0..prepared.len())
        .map(|gi| {
            (0..dim)
                .map(|j| {
                    let column: Vec<f64> = per_trial.iter().map(|(e, _)| e[gi][j]).collect();
                    mean_and_se(&column).1
                })
                .collect()
        })
        .collect();

    Ok(RiskReport {
        design: design.to_string(),
        bias_part,
        variance_part,
        excess_mean,
        closed_form_bias,
        closed_form_variance,
        bias_se,
        variance_se,
        excess_se,
        trials,
        seed,
        group_means: means.iter().map(|m| m.iter().copied().collect()).collect(),
        group_mean_se,
        group_targets: prepared.iter().map(|g| g.target.iter().copied().collect()).collect(),
    })
}

/// Separate OLS estimator per class; closed-form excess `K L σ² / N`.
pub fn mc_validate_thm1(specs: &[LinearClassSpec], trials: usize, seed: u64) -> Result<RiskReport> {
    let groups: Vec<Vec<usize>> = (0..specs.len()).map(|k| vec![k]).collect();
    simulate("per-class", specs, &groups, trials, seed)
}

/// One OLS estimator on the pooled classes; closed-form excess is the
/// Ψ-weighted spread of the class parameters around θ̄ plus `L σ² / N`.
pub fn mc_validate_thm2(specs: &[LinearClassSpec], trials: usize, seed: u64) -> Result<RiskReport> {
    simulate("pooled", specs, &[(0..specs.len()).collect()], trials, seed)
}

/// Monte Carlo estimate of `E[(1/N)‖y − Xθ‖²] − σ²` for a fixed `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalRisk {
    pub excess: f64,
    pub se: f64,
}

pub fn empirical_risk(theta: &DVector<f64>, spec: &LinearClassSpec, trials: usize, seed: u64) -> Result<EmpiricalRisk> {
    check_trials(trials)?;
    let clean = &spec.design * &spec.theta_star;
    let fitted = &spec.design * theta;
    let n = spec.rows() as f64;
    let losses: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(seed, trial as u64 + 1);
            clean
                .iter()
                .zip(fitted.iter())
                .map(|(c, f)| (c + spec.sigma * rng.sample::<f64, _>(StandardNormal) - f).powi(2))
                .sum::<f64>()
                / n
                - spec.sigma.powi(2)
        })
        .collect();
    let (excess, se) = mean_and_se(&losses);
    Ok(EmpiricalRisk { excess, se })
}
