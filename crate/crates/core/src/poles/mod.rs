//! Frequency-domain analysis of the RPA response.
//!
//! The central object is the symmetrized response
//! `chi_s(z) = F^{1/2} chi0(z) F^{1/2}`. With `B = sqrt(dx) F^{1/2} Phi`
//! factored as `B = U R` (`U` with orthonormal columns spanning the range,
//! `R` of full row rank), `chi_s(z) = U R C(z) R^T U^T` where
//! `C(z) = diag(2 w_p / (z^2 - w_p^2))`. All spectral questions about
//! `chi_s` on its range are therefore answered by the small matrix
//! `R C(z) R^T`, and `(1 - chi_s)^{-1}` is the identity off that range.

mod casida;
mod contour;
mod io;
mod props;
mod rpa;
mod scan;
mod shift;

pub use casida::{casida_matrix, casida_poles, CasidaSpectrum, CLUSTER_TOL};
pub use contour::{riesz_rank, rpa_contour_rank, ContourResult, MIN_QUADRATURE, QUADRATURE_TOL, RESIDUE_RANK_TOL};
pub use io::{curves_csv, poles_csv, write_curves_csv, write_poles_csv, write_poles_json};
pub use props::{
    property_checks, AnnihilationRecord, BlowupCheck, MonotoneCheck, NsdCheck, PropertyConfig, PropertyReport, RankIdentityRecord,
    RatioCheck,
};
pub use rpa::{chi_rpa_freq, chi_rpa_reduced, frequency_dyson_defect};
pub use scan::{
    counting_function, eig_curves, find_pole_crossings, find_rpa_poles, rank_at_coincident_pole, scan_upper_bound, BookkeepingRecord,
    EigenCurveScan, PoleScan, ScanConfig, AGREEMENT_TOL, BISECTION_RTOL, MERGE_TOL, MONOTONE_TOL,
};
pub use shift::{default_samples, forward_shift_report, ShiftReport, ShiftSample};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelMatrix, KernelSqrt};
use crate::linalg::{self, CMatrix};
use crate::response::{self, TransitionTable, RANK_TOL};

/// Eigenvalue-1 multiplicity tolerance.
pub const UNIT_EIG_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleKind {
    /// Not a pole of `chi0`.
    Interior,
    /// Coincides with a pole of `chi0`.
    Coincident,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleMethod {
    Bisection,
    /// Eigenvalue-1 multiplicity of the compressed, pole-subtracted problem.
    Projection,
    Casida,
    Contour,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleRecord {
    pub omega: f64,
    /// Rank of the pole of `chi_rpa`.
    pub rank: usize,
    pub kind: PoleKind,
    pub method: PoleMethod,
    /// Spectral norm of the residue of `chi_rpa`.
    pub residue_norm: f64,
    /// Rank of the pole of `(1 - chi_s)^{-1}` at the same frequency; differs
    /// from `rank` only by directions of a coincident pole invisible to `F`.
    pub resolvent_rank: usize,
}

/// Degeneracy group of `chi0` as seen through the kernel.
#[derive(Clone, Debug)]
pub struct CoupledGroup {
    pub omega: f64,
    pub members: Vec<usize>,
    /// `dim span{F^{1/2} phi_p : p in group}`.
    pub dim: usize,
    /// Orthonormal basis of that span in range coordinates (`k x dim`).
    pub basis: DMatrix<f64>,
}

/// Precomputed reduced form of `chi_s` for one model.
#[derive(Clone, Debug)]
pub struct SymmetrizedModel {
    pub table: TransitionTable,
    pub fsqrt: DMatrix<f64>,
    /// `G = dx Phi^T F Phi`.
    pub g: DMatrix<f64>,
    /// Range factor: `k x P`.
    pub r: DMatrix<f64>,
    /// Orthonormal range basis on the grid: `n x k`.
    pub u: DMatrix<f64>,
    pub groups: Vec<CoupledGroup>,
    /// `dx Phi^T Phi`, used for residue norms on the grid.
    pub phi_gram: DMatrix<f64>,
    pub(crate) floor: f64,
}

impl SymmetrizedModel {
    pub fn new(table: &TransitionTable, f: &KernelMatrix, fsqrt: &KernelSqrt) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::EmptyModel("transition table has no pairs".into()));
        }
        let n = table.n_points;
        if f.dim() != n || fsqrt.matrix.nrows() != n {
            return Err(Error::ShapeMismatch { expected: n, got: f.dim() });
        }
        let g = linalg::symmetrize(&(table.phi.transpose() * &f.matrix * &table.phi * table.dx));
        let b = &fsqrt.matrix * &table.phi * table.dx.sqrt();
        let phi_scale = table.phi.column_iter().map(|c| c.norm()).fold(0.0, f64::max) * table.dx.sqrt();
        let floor = 1e-12 * linalg::norm2(&fsqrt.matrix) * phi_scale;
        let p = table.len();

        let (u, r) = if b.iter().all(|&v| v == 0.0) {
            (DMatrix::zeros(n, 0), DMatrix::zeros(0, p))
        } else {
            let svd = b.clone().svd(true, true);
            let su = svd.u.expect("requested U");
            let svt = svd.v_t.expect("requested V^T");
            let sv = &svd.singular_values;
            let top = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
            let cut = (RANK_TOL * top).max(floor);
            let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > cut).collect();
            let mut u = DMatrix::zeros(n, keep.len());
            let mut r = DMatrix::zeros(keep.len(), p);
            for (dst, &src) in keep.iter().enumerate() {
                u.set_column(dst, &su.column(src));
                r.set_row(dst, &(svt.row(src) * sv[src]));
            }
            (u, r)
        };

        let groups = table
            .groups
            .iter()
            .map(|grp| {
                let mut rj = DMatrix::zeros(r.nrows(), grp.members.len());
                for (c, &m) in grp.members.iter().enumerate() {
                    rj.set_column(c, &r.column(m));
                }
                let basis = linalg::column_space(&rj, RANK_TOL, floor);
                CoupledGroup { omega: grp.omega, members: grp.members.clone(), dim: basis.ncols(), basis }
            })
            .collect();
        let phi_gram = table.phi.transpose() * &table.phi * table.dx;
        Ok(Self { table: table.clone(), fsqrt: fsqrt.matrix.clone(), g, r, u, groups, phi_gram, floor })
    }

    /// Dimension of the range of `chi_s`.
    pub fn range_dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.table.omegas()
    }

    /// Lowest frequency at which `chi_s` has a pole, `+inf` if none.
    pub fn lowest_pole(&self) -> f64 {
        self.groups.iter().find(|g| g.dim > 0).map_or(f64::INFINITY, |g| g.omega)
    }

    /// `R C R^T` for an arbitrary coefficient vector.
    pub(crate) fn sandwich(&self, c: &[f64]) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.r.nrows(), self.r.ncols(), |i, j| self.r[(i, j)] * c[j]);
        linalg::symmetrize(&(scaled * self.r.transpose()))
    }

    pub(crate) fn sandwich_c(&self, c: &[Complex64]) -> CMatrix {
        let rc = linalg::to_complex(&self.r);
        let scaled = CMatrix::from_fn(self.r.nrows(), self.r.ncols(), |i, j| rc[(i, j)] * c[j]);
        scaled * rc.transpose()
    }

    /// Reduced `chi_s(omega)` for real `omega` away from the poles.
    pub fn reduced_real(&self, omega: f64) -> Result<DMatrix<f64>> {
        let c = self.table.freq_coeffs(Complex64::new(omega, 0.0))?;
        let c: Vec<f64> = c.iter().map(|v| v.re).collect();
        Ok(self.sandwich(&c))
    }

    pub fn reduced(&self, z: Complex64) -> Result<CMatrix> {
        Ok(self.sandwich_c(&self.table.freq_coeffs(z)?))
    }

    /// `d chi_s / dz` in reduced form.
    pub fn reduced_derivative(&self, z: Complex64) -> Result<CMatrix> {
        let z2 = z * z;
        let mut c = Vec::with_capacity(self.table.len());
        for p in &self.table.pairs {
            let d = z2 - p.omega * p.omega;
            if d.norm() <= response::POLE_GUARD {
                return Err(Error::AtPole { re: z.re, im: z.im });
            }
            c.push(-4.0 * z * p.omega / (d * d));
        }
        Ok(self.sandwich_c(&c))
    }

    /// Eigenvalues of `chi_s(omega)` on its range, descending.
    pub fn eigs_desc(&self, omega: f64) -> Result<Vec<f64>> {
        let (vals, _) = linalg::sym_eigen_sorted(&self.reduced_real(omega)?)?;
        Ok(vals.iter().rev().copied().collect())
    }

    /// Reduced `chi_s(omega_j)` with the terms of group `j` removed.
    pub fn pole_subtracted(&self, j: usize) -> DMatrix<f64> {
        let wj = self.groups[j].omega;
        let members = &self.groups[j].members;
        let c: Vec<f64> = (0..self.table.len())
            .map(|p| {
                if members.contains(&p) {
                    0.0
                } else {
                    let w = self.table.pairs[p].omega;
                    2.0 * w / (wj * wj - w * w)
                }
            })
            .collect();
        self.sandwich(&c)
    }

    /// Null directions of group `j` in pair coordinates: combinations of its
    /// transition densities that the kernel does not see.
    pub fn uncoupled_rank(&self, j: usize) -> usize {
        let members = &self.groups[j].members;
        let k = members.len();
        let rj = DMatrix::from_fn(self.r.nrows(), k, |i, c| self.r[(i, members[c])]);
        let (vals, vecs) = match linalg::sym_eigen_sorted(&(rj.transpose() * &rj)) {
            Ok(v) => v,
            Err(_) => return 0,
        };
        let sv: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
        let top = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
        let cut = (RANK_TOL * top).max(self.floor);
        let null: Vec<usize> = (0..k).filter(|&i| sv[i] <= cut).collect();
        if null.is_empty() {
            return 0;
        }
        let n = self.table.n_points;
        let mut img = DMatrix::zeros(n, null.len());
        for (c, &i) in null.iter().enumerate() {
            let mut col = DVector::zeros(n);
            for (q, &m) in members.iter().enumerate() {
                col += self.table.phi.column(m) * vecs[(q, i)];
            }
            img.set_column(c, &(col * self.table.dx.sqrt()));
        }
        linalg::numerical_rank(&img, RANK_TOL, response::rank_floor(&self.table.phi, self.table.dx))
    }

    /// `||Y Y^T||` for the grid operator `Y = sqrt(dx) Phi M`.
    pub(crate) fn grid_outer_norm(&self, m: &DMatrix<f64>) -> f64 {
        let gram = m.transpose() * &self.phi_gram * m;
        linalg::sym_eigen_sorted(&linalg::symmetrize(&gram)).map_or(0.0, |(v, _)| v.iter().fold(0.0, |a, &b| a.max(b)))
    }
}

/// Full-grid `chi_s(z) = F^{1/2} chi0(z) F^{1/2}`.
pub fn chi_s(table: &TransitionTable, fsqrt: &KernelSqrt, z: Complex64) -> Result<CMatrix> {
    let chi0 = response::chi0_freq(table, z)?;
    let s = linalg::to_complex(&fsqrt.matrix);
    Ok(&s * chi0 * &s)
}
