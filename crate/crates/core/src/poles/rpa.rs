//! Frequency-domain RPA response.

use num_complex::Complex64;

use super::SymmetrizedModel;
use crate::error::{Error, Result};
use crate::kernels::{KernelMatrix, KernelSqrt};
use crate::linalg::{self, CMatrix};
use crate::response::{self, TransitionTable};

pub const MAX_CONDITION: f64 = 1e12;

/// `chi0 + chi0 F^{1/2} (1 - chi_s)^{-1} F^{1/2} chi0` on the grid.
pub fn chi_rpa_freq(table: &TransitionTable, f: &KernelMatrix, fsqrt: &KernelSqrt, z: Complex64) -> Result<CMatrix> {
    let n = table.n_points;
    if f.dim() != n || fsqrt.matrix.nrows() != n {
        return Err(Error::ShapeMismatch { expected: n, got: f.dim() });
    }
    let chi0 = response::chi0_freq(table, z)?;
    let s = linalg::to_complex(&fsqrt.matrix);
    let a = CMatrix::identity(n, n) - &s * &chi0 * &s;
    let cond = linalg::condition_number_c(&a);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularResolvent(cond));
    }
    let inv = a.try_inverse().ok_or(Error::SingularResolvent(f64::INFINITY))?;
    let left = &chi0 * &s;
    Ok(&chi0 + &left * inv * left.transpose())
}

/// Pair-space coefficients `C_rpa = (1 - C G)^{-1} C`, so that
/// `chi_rpa(z) = Phi C_rpa Phi^T dx`.
pub fn chi_rpa_reduced(model: &SymmetrizedModel, z: Complex64) -> Result<CMatrix> {
    let c = model.table.freq_coeffs(z)?;
    let p = c.len();
    let g = linalg::to_complex(&model.g);
    let cg = CMatrix::from_fn(p, p, |i, j| c[i] * g[(i, j)]);
    let a = CMatrix::identity(p, p) - cg;
    let cond = linalg::condition_number_c(&a);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularResolvent(cond));
    }
    let inv = a.try_inverse().ok_or(Error::SingularResolvent(f64::INFINITY))?;
    Ok(CMatrix::from_fn(p, p, |i, j| inv[(i, j)] * c[j]))
}

/// `max |chi - chi0 - chi0 F chi|` of a frequency-domain response.
pub fn frequency_dyson_defect(table: &TransitionTable, f: &KernelMatrix, z: Complex64, chi: &CMatrix) -> Result<f64> {
    let chi0 = response::chi0_freq(table, z)?;
    let fc = linalg::to_complex(&f.matrix);
    let d = chi - &chi0 - &chi0 * fc * chi;
    Ok(linalg::max_abs_c(&d))
}
