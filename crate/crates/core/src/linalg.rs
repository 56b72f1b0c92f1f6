//! Dense kernels used by the solvers and the regularity diagnostics.
//!
//! Everything here works on `nalgebra` dynamic matrices. The systems handled by
//! this crate are at most a few thousand rows, so plain dense factorizations are
//! used throughout.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot threshold below which an LU factorization is declared singular.
pub const PIVOT_EPS: f64 = 1e-12;

/// Returned by [`solve_linear`] when a pivot collapses.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("matrix is numerically singular (pivot {pivot:.3e} below {threshold:.3e})")]
pub struct SingularSignal {
    pub pivot: f64,
    pub threshold: f64,
}

fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Solves `a * x = b` by LU with partial pivoting.
///
/// A pivot smaller than `PIVOT_EPS * max|a_ij|` is reported as [`SingularSignal`].
pub fn solve_linear(a: &Matrix, b: &Vector) -> Result<Vector, SingularSignal> {
    assert!(a.is_square(), "solve_linear needs a square matrix");
    assert_eq!(a.nrows(), b.len(), "dimension mismatch in solve_linear");
    if b.is_empty() {
        return Ok(Vector::zeros(0));
    }
    let scale = max_abs(a);
    let threshold = PIVOT_EPS * scale;
    if scale == 0.0 {
        return Err(SingularSignal { pivot: 0.0, threshold });
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let pivot = u.diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if !(pivot > threshold) {
        return Err(SingularSignal { pivot, threshold });
    }
    lu.solve(b).ok_or(SingularSignal { pivot, threshold })
}

/// Number of singular values above `tol * sigma_max`.
pub fn numerical_rank(a: &Matrix, tol: f64) -> usize {
    assert!(tol > 0.0);
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0_f64, |acc, v| acc.max(*v));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > tol * smax).count()
}

/// Smallest eigenvalue of a symmetric matrix. The input is symmetrized first.
pub fn min_eig_sym(a: &Matrix) -> f64 {
    assert!(a.is_square());
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().fold(f64::INFINITY, |acc, v| acc.min(*v))
}

/// Orthonormal basis of the null space of `a`, one basis vector per column.
///
/// Singular values at or below `tol * max(1, sigma_max)` count as zero.
pub fn nullspace_basis(a: &Matrix, tol: f64) -> Matrix {
    assert!(tol > 0.0);
    let ncols = a.ncols();
    if a.nrows() == 0 || ncols == 0 {
        return Matrix::identity(ncols, ncols);
    }
    // Pad to at least `ncols` rows so the thin SVD yields a full V.
    let padded = if a.nrows() < ncols {
        let mut p = Matrix::zeros(ncols, ncols);
        p.view_mut((0, 0), (a.nrows(), ncols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().fold(0.0_f64, |acc, v| acc.max(*v));
    let cut = tol * smax.max(1.0);
    let null_rows: Vec<usize> =
        svd.singular_values.iter().enumerate().filter(|(_, s)| **s <= cut).map(|(i, _)| i).collect();
    let mut basis = Matrix::zeros(ncols, null_rows.len());
    for (k, &i) in null_rows.iter().enumerate() {
        basis.set_column(k, &v_t.row(i).transpose());
    }
    basis
}

/// Max-norm of a vector (zero for empty vectors).
pub fn norm_inf(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn mat_norm_inf(a: &Matrix) -> f64 {
    max_abs(a)
}
