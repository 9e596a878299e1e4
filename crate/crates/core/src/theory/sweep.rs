use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::engine::{simulate, CheckResult, RiskReport, ABSOLUTE_FLOOR, STANDARD_ERRORS};
use super::{even_sizes, gaussian_design, LinearClassSpec};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Synthetic multi-feature setting: every (feature, class) cell holds an equal
/// share of the instances and class `k` follows parameter `θ*_k` regardless of
/// the feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub features: usize,
    pub classes: usize,
    pub lookback: usize,
    pub instances: usize,
    pub sigma: f64,
    /// Scale of the class-specific parameter offsets; 0 makes all classes equal.
    pub heterogeneity: f64,
    pub trials: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.classes == 0 || self.lookback == 0 {
            return Err(Error::InvalidParameter("features, classes and lookback must be positive".into()));
        }
        let groups = self.features.max(self.classes);
        if self.instances / groups <= self.lookback {
            return Err(Error::InvalidParameter(format!(
                "{} instances leave at most {} rows per estimator, need more than {}",
                self.instances,
                self.instances / groups,
                self.lookback
            )));
        }
        Ok(())
    }

    /// Cells in (feature-major) order with fixed Gaussian designs.
    pub fn cells(&self) -> Result<Vec<LinearClassSpec>> {
        self.validate()?;
        let mut rng = stream_rng(self.seed, 0);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| DVector::from_fn(self.lookback, |_, _| rng.sample::<f64, _>(StandardNormal));
        let base = draw(&mut rng);
        let thetas: Vec<DVector<f64>> = (0..self.classes).map(|_| &base + draw(&mut rng) * self.heterogeneity).collect();
        let sizes = even_sizes(self.instances, self.features * self.classes);
        let mut cells = Vec::with_capacity(sizes.len());
        for d in 0..self.features {
            for (k, theta) in thetas.iter().enumerate() {
                let rows = sizes[d * self.classes + k];
                cells.push(LinearClassSpec::new(theta.clone(), gaussian_design(rows, self.lookback, &mut rng), self.sigma)?);
            }
        }
        Ok(cells)
    }
}

/// Risk reports of the three estimator designs on the same data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    /// One estimator for everything.
    pub one_channel: RiskReport,
    /// One estimator per true class.
    pub oracle_class: RiskReport,
    /// One estimator per feature.
    pub channel_independent: RiskReport,
}

fn no_larger(name: &str, small: &RiskReport, large: &RiskReport, value: fn(&RiskReport) -> (f64, f64)) -> CheckResult {
    let (a, sa) = value(small);
    let (b, sb) = value(large);
    let tolerance = (STANDARD_ERRORS * (sa * sa + sb * sb).sqrt()).max(ABSOLUTE_FLOOR);
    CheckResult { name: name.to_string(), empirical: a, expected: b, tolerance, passed: a <= b + tolerance }
}

impl SweepReport {
    pub fn reports(&self) -> [&RiskReport; 3] {
        [&self.one_channel, &self.oracle_class, &self.channel_independent]
    }

    /// Closed-form agreement of every design, the variance ordering when
    /// classes do not outnumber features, and dominance of the single
    /// estimator when the classes coincide.
    pub fn checks(&self) -> Vec<CheckResult> {
        let mut out: Vec<CheckResult> = self.reports().iter().flat_map(|r| r.checks()).collect();
        let variance = |r: &RiskReport| (r.variance_part, r.variance_se);
        if self.config.classes <= self.config.features {
            out.push(no_larger("variance: one-channel <= per-class", &self.one_channel, &self.oracle_class, variance));
            out.push(no_larger("variance: per-class <= per-feature", &self.oracle_class, &self.channel_independent, variance));
        }
        if self.config.heterogeneity == 0.0 {
            let excess = |r: &RiskReport| (r.excess_mean, r.excess_se);
            out.push(no_larger("excess: one-channel <= per-class", &self.one_channel, &self.oracle_class, excess));
            out.push(no_larger("excess: one-channel <= per-feature", &self.one_channel, &self.channel_independent, excess));
        }
        out
    }
}

pub fn channel_design_sweep(config: &SweepConfig) -> Result<SweepReport> {
    let cells = config.cells()?;
    let (d, k) = (config.features, config.classes);
    let all: Vec<usize> = (0..d * k).collect();
    let by_class: Vec<Vec<usize>> = (0..k).map(|c| (0..d).map(|f| f * k + c).collect()).collect();
    let by_feature: Vec<Vec<usize>> = (0..d).map(|f| (0..k).map(|c| f * k + c).collect()).collect();
    Ok(SweepReport {
        config: config.clone(),
        one_channel: simulate("one-channel", &cells, &[all], config.trials, config.seed)?,
        oracle_class: simulate("per-class", &cells, &by_class, config.trials, config.seed)?,
        channel_independent: simulate("per-feature", &cells, &by_feature, config.trials, config.seed)?,
    })
}
