//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const POWER_ITERATION_CAP: usize = 10_000;
pub const DEFAULT_NORM_TOL: f64 = 1e-6;

/// Largest singular value of `m` via power iteration on `MᵀM`.
///
/// Stops once the relative change of the estimate drops below `tol`. The
/// start vector is fixed, so the result is a deterministic function of `m`.
pub fn operator_norm(m: &DMatrix<f64>, tol: f64) -> Result<f64> {
    operator_norm_capped(m, tol, POWER_ITERATION_CAP)
}

fn operator_norm_capped(m: &DMatrix<f64>, tol: f64, cap: usize) -> Result<f64> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let cols = m.ncols();
    if m.nrows() == 0 || cols == 0 {
        return Ok(0.0);
    }
    let mut v = DVector::from_fn(cols, |i, _| 1.0 + 0.5 * ((i as f64) * 1.618_033_988_75 + 0.3).sin());
    v /= v.norm();
    let mut estimate = 0.0f64;
    let mut mv = DVector::zeros(m.nrows());
    let mut w = DVector::zeros(cols);
    for it in 1..=cap {
        mv.gemv(1.0, m, &v, 0.0);
        w.gemv_tr(1.0, m, &mv, 0.0);
        let lambda = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        let next = lambda.max(0.0).sqrt();
        v.copy_from(&w);
        v /= wn;
        if it > 1 && (next - estimate).abs() <= tol * next {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::NoConvergence { iterations: cap, estimate })
}

/// `exp(m)` by nalgebra's Padé scaling-and-squaring.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_norm() {
        let m = DMatrix::<f64>::identity(5, 5);
        assert!((operator_norm(&m, 1e-10).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_norm_is_max_abs_entry() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -5.0]);
        assert!((operator_norm(&m, 1e-12).unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn matches_svd_and_transpose() {
        let m = DMatrix::from_fn(7, 7, |i, j| ((i * 7 + j) as f64 * 0.77).sin());
        let svd = m.clone().svd(false, false).singular_values.max();
        let a = operator_norm(&m, 1e-12).unwrap();
        let b = operator_norm(&m.transpose(), 1e-12).unwrap();
        assert!((a - svd).abs() < 1e-8 * svd);
        assert!((a - b).abs() < 1e-8 * svd);
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(operator_norm(&DMatrix::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn reports_non_convergence_with_estimate() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.999]);
        match operator_norm_capped(&m, 1e-15, 3) {
            Err(Error::NoConvergence { iterations, estimate }) => {
                assert_eq!(iterations, 3);
                assert!(estimate > 0.99 && estimate <= 1.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(operator_norm(&DMatrix::from_element(2, 2, f64::NAN), 1e-6).is_err());
    }

    #[test]
    fn expm_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let e = expm(&m);
        assert!((e[(0, 0)] - 1f64.exp()).abs() < 1e-13);
        assert!((e[(1, 1)] - (-2f64).exp()).abs() < 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
    }
}
