//! Error-supervised label assignment.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::normalization::{InstanceStats, RevIn};
use crate::tslinear::TsLinear;

/// Class sizes for a pool of `instances`: `floor(instances / classes)` each,
/// the remainder handed out one per class starting at class 1.
pub fn n_k_schedule(instances: usize, classes: usize) -> Vec<usize> {
    assert!(classes >= 1, "need at least one class");
    let base = instances / classes;
    let rem = instances % classes;
    (0..classes).map(|k| base + usize::from(k < rem)).collect()
}

/// Hard class labels of a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassAssignment {
    /// Class of every instance.
    pub labels: Vec<usize>,
    /// Instance indices of every class, ascending.
    pub members: Vec<Vec<usize>>,
}

impl ClassAssignment {
    pub fn classes(&self) -> usize {
        self.members.len()
    }

    /// The one-hot label matrix C (instances x classes).
    pub fn one_hot(&self) -> Array2<f64> {
        let mut c = Array2::zeros((self.labels.len(), self.classes()));
        for (i, &k) in self.labels.iter().enumerate() {
            c[[i, k]] = 1.0;
        }
        c
    }

    /// Disjoint, exhaustive and sized per `schedule`.
    pub fn is_partition(&self, schedule: &[usize]) -> bool {
        if self.members.len() != schedule.len() {
            return false;
        }
        let mut seen = vec![false; self.labels.len()];
        for (k, (members, &size)) in self.members.iter().zip(schedule).enumerate() {
            if members.len() != size {
                return false;
            }
            for &i in members {
                if i >= seen.len() || seen[i] || self.labels[i] != k {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Per-instance mean squared error between two row sets.
fn row_mse(a: &Array2<f64>, b: ArrayView2<f64>) -> Vec<f64> {
    let h = a.ncols() as f64;
    a.outer_iter()
        .zip(b.outer_iter())
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / h)
        .collect()
}

/// Sequential greedy assignment: for k = 1..K predictor k forecasts the
/// remaining pool, the `schedule[k]` instances with the lowest denormalized
/// MSE join class k and leave the pool. Ties break on instance index.
pub fn assign_labels(
    x_norm: ArrayView2<f64>,
    y: ArrayView2<f64>,
    stats: &[InstanceStats],
    feature: &[usize],
    revin: &RevIn,
    predictors: &[TsLinear],
    schedule: &[usize],
) -> Result<ClassAssignment> {
    let n = x_norm.nrows();
    let required: usize = schedule.iter().sum();
    if required > n {
        return Err(Error::PoolTooSmall { available: n, required });
    }
    if schedule.len() != predictors.len() {
        return Err(Error::Shape(format!("{} class sizes for {} predictors", schedule.len(), predictors.len())));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    let mut labels = vec![usize::MAX; n];
    let mut members = Vec::with_capacity(predictors.len());
    for (k, (f, &take)) in predictors.iter().zip(schedule).enumerate() {
        let chosen: Vec<usize> = if take == pool.len() {
            pool.clone()
        } else {
            let xs = x_norm.select(Axis(0), &pool);
            let pred_n = f.predict(xs.view())?;
            let p_stats: Vec<InstanceStats> = pool.iter().map(|&i| stats[i]).collect();
            let p_feat: Vec<usize> = pool.iter().map(|&i| feature[i]).collect();
            let pred = revin.denorm_batch(pred_n.view(), &p_stats, &p_feat);
            let err = row_mse(&pred, y.select(Axis(0), &pool).view());
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.sort_by(|&a, &b| err[a].total_cmp(&err[b]).then(pool[a].cmp(&pool[b])));
            order.truncate(take);
            order.into_iter().map(|j| pool[j]).collect()
        };
        let mut chosen = chosen;
        chosen.sort_unstable();
        for &i in &chosen {
            labels[i] = k;
        }
        pool.retain(|i| labels[*i] == usize::MAX);
        members.push(chosen);
    }
    Ok(ClassAssignment { labels, members })
}
