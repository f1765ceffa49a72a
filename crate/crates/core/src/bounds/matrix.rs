//! Fisher information containers and the shared inversion routine.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::BoundsError;

/// Condition number above which an information matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Relative asymmetry tolerated before an information matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A labelled symmetric information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub labels: Vec<String>,
    pub matrix: DMatrix<f64>,
}

impl FisherMatrix {
    pub fn new(labels: Vec<String>, matrix: DMatrix<f64>) -> Self {
        assert_eq!(labels.len(), matrix.nrows(), "one label per row");
        assert!(matrix.is_square(), "information matrix must be square");
        FisherMatrix { labels, matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.matrix[(r, c)]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Largest |J - Jᵀ| entry relative to the largest |J| entry.
    pub fn asymmetry(&self) -> f64 {
        let m = &self.matrix;
        let scale = m.amax();
        if scale == 0.0 {
            return 0.0;
        }
        (m - m.transpose()).amax() / scale
    }
}

/// A variance bound and the numerical health of the matrix behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrlbResult {
    /// Variance (distance) or trace of the position covariance bound, m².
    pub variance_bound: f64,
    pub rmse_bound: f64,
    /// Condition number after symmetric diagonal equilibration.
    pub condition_number: f64,
    pub singular_flag: bool,
}

impl CrlbResult {
    pub(crate) fn from_variance(variance: f64, condition_number: f64) -> Self {
        if !(variance > 0.0 && variance.is_finite()) || !(condition_number <= SINGULAR_CONDITION) {
            return Self::singular(condition_number);
        }
        CrlbResult {
            variance_bound: variance,
            rmse_bound: variance.sqrt(),
            condition_number,
            singular_flag: false,
        }
    }

    pub(crate) fn singular(condition_number: f64) -> Self {
        CrlbResult {
            variance_bound: f64::INFINITY,
            rmse_bound: f64::INFINITY,
            condition_number,
            singular_flag: true,
        }
    }
}

/// `D^{-1/2}` for the diagonal of `m`; `None` when a diagonal entry is not positive.
fn equilibrator(m: &DMatrix<f64>) -> Option<Vec<f64>> {
    m.diagonal()
        .iter()
        .map(|&d| {
            if d > 0.0 && d.is_finite() {
                Some(1.0 / d.sqrt())
            } else {
                None
            }
        })
        .collect()
}

fn scaled(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] * d[r] * d[c])
}

/// Condition number of `D^{-1/2} J D^{-1/2}`; infinite when `J` is not positive definite.
///
/// Equilibration removes the unit disparity between parameters (metres,
/// seconds, unitless gains), which otherwise dominates the raw condition number.
pub fn equilibrated_condition(m: &DMatrix<f64>) -> f64 {
    let Some(d) = equilibrator(m) else {
        return f64::INFINITY;
    };
    let s = scaled(m, &d);
    let s = 0.5 * (&s + s.transpose());
    let eig = SymmetricEigen::new(s).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn check_symmetric(j: &FisherMatrix) -> Result<(), BoundsError> {
    let asym = j.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(BoundsError::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Trace of the leading `p×p` block of `J⁻¹`.
pub fn leading_inverse_trace(j: &FisherMatrix, p: usize) -> Result<CrlbResult, BoundsError> {
    assert!(p <= j.dim());
    check_symmetric(j)?;
    let cond = equilibrated_condition(&j.matrix);
    if !(cond <= SINGULAR_CONDITION) {
        return Ok(CrlbResult::singular(cond));
    }
    let d = equilibrator(&j.matrix).expect("positive diagonal after conditioning check");
    let s = scaled(&j.matrix, &d);
    let s = 0.5 * (&s + s.transpose());
    let Some(chol) = s.cholesky() else {
        return Ok(CrlbResult::singular(cond));
    };
    let inv = chol.inverse();
    let trace: f64 = (0..p).map(|r| inv[(r, r)] * d[r] * d[r]).sum();
    Ok(CrlbResult::from_variance(trace, cond))
}

/// Trace of `J⁻¹` via a Cholesky factorisation of the equilibrated matrix.
pub fn trace_inverse(j: &FisherMatrix) -> Result<CrlbResult, BoundsError> {
    leading_inverse_trace(j, j.dim())
}

/// Inverse of a small symmetric positive-definite block, or `None` when its
/// equilibrated condition exceeds [`SINGULAR_CONDITION`].
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if !(equilibrated_condition(m) <= SINGULAR_CONDITION) {
        return None;
    }
    let d = equilibrator(m)?;
    let s = scaled(m, &d);
    let inv = (0.5 * (&s + s.transpose())).cholesky()?.inverse();
    Some(scaled(&inv, &d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(m: DMatrix<f64>) -> FisherMatrix {
        let labels = (0..m.nrows()).map(|i| format!("p{i}")).collect();
        FisherMatrix::new(labels, m)
    }

    #[test]
    fn identity_and_diagonal() {
        let r = trace_inverse(&fm(DMatrix::identity(3, 3))).unwrap();
        assert!((r.variance_bound - 3.0).abs() < 1e-15);
        assert_eq!(r.condition_number, 1.0);
        let r = trace_inverse(&fm(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            2.0, 1e-20, 4e15,
        ]))))
        .unwrap();
        assert!(!r.singular_flag);
        assert!((r.variance_bound - (0.5 + 1e20 + 0.25e-15)).abs() < 1e6);
    }

    #[test]
    fn rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(trace_inverse(&fm(m)), Err(BoundsError::NotSymmetric { .. })));
    }

    #[test]
    fn flags_rank_deficiency() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let r = trace_inverse(&fm(m)).unwrap();
        assert!(r.singular_flag);
        assert!(r.rmse_bound.is_infinite());
    }
}
