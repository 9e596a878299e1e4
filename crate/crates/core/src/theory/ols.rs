use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest accepted condition number of `XᵀX`.
pub const CONDITION_CAP: f64 = 1e10;

/// Least-squares solver for a fixed design, factorized once by QR and reused
/// for any number of response vectors.
#[derive(Debug, Clone)]
pub struct OlsSolver {
    q_t: DMatrix<f64>,
    r: DMatrix<f64>,
    condition: f64,
}

impl OlsSolver {
    pub fn new(design: &DMatrix<f64>) -> Result<Self> {
        Self::with_cap(design, CONDITION_CAP)
    }

    pub fn with_cap(design: &DMatrix<f64>, cap: f64) -> Result<Self> {
        let (rows, cols) = design.shape();
        if cols == 0 {
            return Err(Error::Shape("design has no columns".into()));
        }
        if rows < cols {
            return Err(Error::IllConditioned { condition: f64::INFINITY });
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { stage: "design" });
        }
        let qr = design.clone().qr();
        let r = qr.r();
        let singular = r.singular_values();
        let (lo, hi) = singular.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        // cond(XᵀX) = cond(R)²
        let condition = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
        if condition.is_nan() || condition > cap {
            return Err(Error::IllConditioned { condition });
        }
        Ok(OlsSolver { q_t: qr.q().transpose(), r, condition })
    }

    /// Condition number estimate of `XᵀX`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn rows(&self) -> usize {
        self.q_t.ncols()
    }

    pub fn solve(&self, response: &DVector<f64>) -> Result<DVector<f64>> {
        if response.len() != self.rows() {
            return Err(Error::Shape(format!("response has {} rows, design has {}", response.len(), self.rows())));
        }
        let rhs = &self.q_t * response;
        self.r
            .solve_upper_triangular(&rhs)
            .ok_or(Error::IllConditioned { condition: f64::INFINITY })
    }
}

/// Ordinary least squares estimate `argmin ‖Y − Xθ‖²`.
pub fn ols_fit(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<DVector<f64>> {
    OlsSolver::new(design)?.solve(response)
}
