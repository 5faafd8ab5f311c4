//! Small dense linear-algebra helpers shared by the physics modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
///
/// Eigenvector columns follow the eigenvalue order and carry the sign
/// convention of [`fix_signs`].
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::ShapeMismatch { expected: n, got: m.ncols() });
    }
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("matrix has non-finite entries".into()));
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("eigensolver returned non-finite values".into()));
    }
    fix_signs(&mut vectors);
    Ok((values, vectors))
}

/// Flip columns so that the first entry with magnitude above 1e-12 is positive.
pub fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        if let Some(&first) = col.iter().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Largest entry magnitude.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_c(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.norm()))
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Positive square root of a symmetric matrix. Eigenvalues within `rel_tol`
/// times the largest eigenvalue of zero are treated as zero; more negative
/// ones are an error.
pub fn psd_sqrt(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen_sorted(m)?;
    let n = vals.len();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let max = vals[n - 1];
    let min = vals[0];
    if min < -rel_tol * max.max(0.0) {
        return Err(Error::NotPsd { min, max });
    }
    let cut = rel_tol * max.max(0.0);
    let roots = DVector::from_iterator(n, vals.iter().map(|&v| if v <= cut { 0.0 } else { v.sqrt() }));
    let scaled = DMatrix::from_fn(n, n, |i, j| vecs[(i, j)] * roots[j]);
    let s = &scaled * vecs.transpose();
    Ok(symmetrize(&s))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn singular_values_c(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `max(rel_tol * sigma_max, floor)`.
pub fn rank_from_singular(sv: &[f64], rel_tol: f64, floor: f64) -> usize {
    let top = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cut = (rel_tol * top).max(floor);
    sv.iter().filter(|&&s| s > cut).count()
}

pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64, floor: f64) -> usize {
    rank_from_singular(&singular_values(m), rel_tol, floor)
}

/// Orthonormal basis (columns) for the column space of `m`, using the same
/// rank rule as [`numerical_rank`].
pub fn column_space(m: &DMatrix<f64>, rel_tol: f64, floor: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    if rows == 0 || m.ncols() == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let top = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cut = (rel_tol * top).max(floor);
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > cut).collect();
    let mut basis = DMatrix::zeros(rows, keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        basis.set_column(dst, &u.column(src));
    }
    basis
}

/// 2-norm condition number of a complex square matrix.
pub fn condition_number_c(m: &CMatrix) -> f64 {
    let sv = singular_values_c(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Spectral norm.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn norm2_c(m: &CMatrix) -> f64 {
    singular_values_c(m).first().copied().unwrap_or(0.0)
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fitted exponent `p` of `err ~ C h^p` from a log-log least-squares fit.
pub fn fitted_order(h: &[f64], err: &[f64]) -> f64 {
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}
