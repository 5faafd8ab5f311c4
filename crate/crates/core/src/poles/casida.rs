//! Casida matrix `Omega = diag(w^2) + 2 sqrt(w) G sqrt(w)`.
//!
//! In pair coordinates `C_rpa(z) = 2 W^{1/2} (z^2 - Omega)^{-1} W^{1/2}` with
//! `W = diag(w)`, so an eigenvalue cluster `nu^2` with eigenvectors `X`
//! contributes a pole of `chi_rpa` at `nu` whose residue is
//! `Phi W^{1/2} X X^T W^{1/2} Phi^T dx / nu`.

use nalgebra::{DMatrix, DVector};

use super::{PoleKind, PoleMethod, PoleRecord, SymmetrizedModel};
use crate::error::Result;
use crate::kernels::KernelMatrix;
use crate::linalg;
use crate::response::{self, TransitionTable, RANK_TOL};

/// Relative tolerance for clustering Casida eigenvalues.
pub const CLUSTER_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CasidaSpectrum {
    pub matrix: DMatrix<f64>,
    /// Ascending squared frequencies.
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl CasidaSpectrum {
    /// `sqrt` of the eigenvalues; negative eigenvalues (unstable modes of an
    /// indefinite kernel) map to NaN.
    pub fn frequencies(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|&l| if l >= 0.0 { l.sqrt() } else { f64::NAN }).collect()
    }

    /// Index ranges of clustered eigenvalues.
    pub fn clusters(&self) -> Vec<std::ops::Range<usize>> {
        let n = self.eigenvalues.len();
        let scale = self.eigenvalues.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=n {
            if i == n || self.eigenvalues[i] - self.eigenvalues[i - 1] > CLUSTER_TOL * scale {
                out.push(start..i);
                start = i;
            }
        }
        out
    }
}

pub fn casida_matrix(table: &TransitionTable, f: &KernelMatrix) -> Result<CasidaSpectrum> {
    if !f.is_psd()? {
        let (min, max) = f.eigen_range()?;
        return Err(crate::Error::NotPsd { min, max });
    }
    let g = crate::dyson::reduce_to_transition_space(table, f)?.g;
    casida_from_reduced(table, &g)
}

/// Casida spectrum from an already reduced coupling `G`.
pub(crate) fn casida_from_reduced(table: &TransitionTable, g: &DMatrix<f64>) -> Result<CasidaSpectrum> {
    let w = table.omegas();
    let p = w.len();
    let matrix = linalg::symmetrize(&DMatrix::from_fn(p, p, |i, j| {
        let diag = if i == j { w[i] * w[i] } else { 0.0 };
        diag + 2.0 * w[i].sqrt() * g[(i, j)] * w[j].sqrt()
    }));
    let (eigenvalues, eigenvectors) = linalg::sym_eigen_sorted(&matrix)?;
    Ok(CasidaSpectrum { matrix, eigenvalues, eigenvectors })
}

/// Poles of `chi_rpa` from the Casida spectrum, with ranks from the residue.
pub fn casida_poles(model: &SymmetrizedModel, spectrum: &CasidaSpectrum) -> Vec<PoleRecord> {
    let table = &model.table;
    let w = table.omegas();
    let floor = response::rank_floor(&table.phi, table.dx) * w.iter().fold(1.0_f64, |a, &b| a.max(b.sqrt()));
    let mut out = Vec::new();
    for range in spectrum.clusters() {
        let lam = range.clone().map(|i| spectrum.eigenvalues[i]).sum::<f64>() / range.len() as f64;
        if lam <= 0.0 {
            continue;
        }
        let nu = lam.sqrt();
        let x = DMatrix::from_fn(w.len(), range.len(), |p, c| w[p].sqrt() * spectrum.eigenvectors[(p, range.start + c)]);
        let img = &table.phi * &x * table.dx.sqrt();
        let rank = linalg::numerical_rank(&img, RANK_TOL, floor);
        if rank == 0 {
            continue;
        }
        let coincident = table.groups.iter().position(|g| (g.omega - nu).abs() <= table.group_tol.max(1e-9));
        let resolvent_rank = match coincident {
            Some(j) => rank.saturating_sub(model.uncoupled_rank(j)),
            None => rank,
        };
        out.push(PoleRecord {
            omega: nu,
            rank,
            kind: if coincident.is_some() { PoleKind::Coincident } else { PoleKind::Interior },
            method: PoleMethod::Casida,
            residue_norm: model.grid_outer_norm(&x) / nu,
            resolvent_rank,
        });
    }
    out
}
