//! Eigencurve scans, bisection of `mu_i(omega) = 1` and coincident-pole ranks.
//!
//! Within an excitation-free interval the eigenvalues of `chi_s(omega)`
//! sorted in descending order are continuous and non-increasing, so the
//! `i`-th curve crosses 1 at most once and the crossings are found by plain
//! bisection on the index. The padding that keeps evaluations away from the
//! poles of `chi0` is shrunk whenever the counting-function balance
//! `n(w_j+) = n(w_j-) + dim V_j - dim ker` fails, since a violation means a
//! crossing is hiding inside the padding.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::casida::{casida_from_reduced, CLUSTER_TOL};
use super::{casida_poles, PoleKind, PoleMethod, PoleRecord, SymmetrizedModel, UNIT_EIG_TOL};
use crate::error::{Error, Result};
use crate::linalg;

pub const MAX_BISECTION: usize = 200;
/// Crossings closer than this are one pole.
pub const MERGE_TOL: f64 = 1e-9;
/// Relative width at which bisection stops.
pub const BISECTION_RTOL: f64 = 1e-14;
/// Frequency agreement demanded between independent pole searches.
pub const AGREEMENT_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub omega_min: f64,
    /// Defaults to [`scan_upper_bound`].
    pub omega_max: Option<f64>,
    pub n_samples: usize,
    pub padding: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { omega_min: 0.0, omega_max: None, n_samples: 400, padding: 1e-6 }
    }
}

/// Frequency above which `chi_s(omega)` has no eigenvalue reaching 1:
/// there `mu_max <= ||G|| 2 w_P / (omega^2 - w_P^2) < 1`.
pub fn scan_upper_bound(model: &SymmetrizedModel) -> f64 {
    let wp = model.table.max_omega();
    let g = linalg::norm2(&model.g).max(linalg::norm2(&model.r).powi(2));
    (wp * wp + 2.0 * wp * g).sqrt() * (1.0 + 1e-6) + 1e-6
}

pub fn counting_function(model: &SymmetrizedModel, omega: f64, mu0: f64) -> Result<usize> {
    Ok(model.eigs_desc(omega)?.iter().filter(|&&m| m > mu0).count())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenCurveScan {
    pub omegas: Vec<f64>,
    /// Descending eigenvalues per sample.
    pub eigs: Vec<Vec<f64>>,
    /// Per curve index: non-increasing wherever the curve is positive.
    pub monotone: Vec<bool>,
    /// Largest increase seen between consecutive positive samples.
    pub worst_increase: f64,
}

impl EigenCurveScan {
    pub fn all_monotone(&self) -> bool {
        self.monotone.iter().all(|&m| m)
    }
}

/// Monotonicity tolerance of eigencurves, relative to `max(1, |mu|)`.
pub const MONOTONE_TOL: f64 = 1e-9;

pub fn eig_curves(model: &SymmetrizedModel, interval: (f64, f64), n_samples: usize) -> Result<EigenCurveScan> {
    let (lo, hi) = interval;
    if !(lo < hi) || n_samples < 2 {
        return Err(Error::InvalidDomain(format!("bad scan interval ({lo}, {hi}) with {n_samples} samples")));
    }
    for g in &model.table.groups {
        for pole in [g.omega, -g.omega] {
            if pole >= lo - 1e-8 && pole <= hi + 1e-8 {
                return Err(Error::IntervalContainsPole { lo, hi });
            }
        }
    }
    let omegas: Vec<f64> = (0..n_samples).map(|i| lo + (hi - lo) * i as f64 / (n_samples - 1) as f64).collect();
    let eigs = omegas.par_iter().map(|&w| model.eigs_desc(w)).collect::<Result<Vec<_>>>()?;
    let k = model.range_dim();
    let mut monotone = vec![true; k];
    let mut worst = 0.0_f64;
    for s in 1..eigs.len() {
        for i in 0..k {
            let (a, b) = (eigs[s - 1][i], eigs[s][i]);
            if a > 0.0 && b > 0.0 {
                let rise = b - a;
                worst = worst.max(rise);
                if rise > MONOTONE_TOL * a.abs().max(1.0) {
                    monotone[i] = false;
                }
            }
        }
    }
    Ok(EigenCurveScan { omegas, eigs, monotone, worst_increase: worst })
}

fn bisect(model: &SymmetrizedModel, index: usize, lo: f64, hi: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..MAX_BISECTION {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_RTOL * hi.abs().max(1.0) || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if model.eigs_desc(mid)?[index] > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::MaxBisectionIterations(MAX_BISECTION))
}

/// Residue norm of `chi_rpa` at an interior pole from the eigenvectors of
/// `chi_s` with eigenvalue 1 (first-order expansion of `1 - chi_s`).
fn interior_residue(model: &SymmetrizedModel, omega: f64, v: &DMatrix<f64>) -> Result<f64> {
    let z = num_complex::Complex64::new(omega, 0.0);
    let dchi = model.reduced_derivative(z)?.map(|c| c.re);
    let a = -(v.transpose() * dchi * v);
    let (vals, vecs) = linalg::sym_eigen_sorted(&linalg::symmetrize(&a))?;
    if vals.iter().any(|&l| l <= 0.0) {
        return Err(Error::NumericalFailure(format!("eigencurve at {omega} is not decreasing")));
    }
    // A^{-1/2} with A^{-1} the residue of (1 - chi_s)^{-1} in eigenvector coordinates.
    let inv_sqrt = &vecs * DMatrix::from_diagonal(&vals.map(|l| 1.0 / l.sqrt())) * vecs.transpose();
    let c: Vec<f64> = model.table.freq_coeffs(z)?.iter().map(|c| c.re).collect();
    let crt = DMatrix::from_fn(model.table.len(), model.range_dim(), |p, i| c[p] * model.r[(i, p)]);
    Ok(model.grid_outer_norm(&(crt * v * inv_sqrt)))
}

/// Local eigenvectors of `chi_s(omega)` with eigenvalue within [`UNIT_EIG_TOL`] of 1.
fn unit_eigvecs(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = linalg::sym_eigen_sorted(m)?;
    let idx: Vec<usize> = (0..vals.len()).filter(|&i| (vals[i] - 1.0).abs() <= UNIT_EIG_TOL).collect();
    Ok(DMatrix::from_fn(m.nrows(), idx.len(), |r, c| vecs[(r, idx[c])]))
}

/// Coincident-pole record for degeneracy group `j`; the record carries rank 0
/// when `w_j` is not a pole of the RPA response.
pub fn rank_at_coincident_pole(model: &SymmetrizedModel, j: usize) -> Result<PoleRecord> {
    let group = model.groups.get(j).ok_or_else(|| Error::InvalidDomain(format!("no degeneracy group {j}")))?;
    let k = model.range_dim();
    let kernel_dim = if k == 0 {
        0
    } else {
        let sub = model.pole_subtracted(j);
        let w = if group.dim == 0 {
            DMatrix::identity(k, k)
        } else {
            let q = &group.basis;
            let perp = DMatrix::identity(k, k) - q * q.transpose();
            let (vals, vecs) = linalg::sym_eigen_sorted(&linalg::symmetrize(&perp))?;
            let keep: Vec<usize> = (0..k).filter(|&i| vals[i] > 0.5).collect();
            DMatrix::from_fn(k, keep.len(), |r, c| vecs[(r, keep[c])])
        };
        if w.ncols() == 0 {
            0
        } else {
            let comp = linalg::symmetrize(&(w.transpose() * sub * &w));
            let (vals, _) = linalg::sym_eigen_sorted(&comp)?;
            vals.iter().filter(|&&m| (m - 1.0).abs() <= UNIT_EIG_TOL).count()
        }
    };
    let uncoupled = model.uncoupled_rank(j);
    let spectrum = casida_from_reduced(&model.table, &model.g)?;
    let scale = spectrum.eigenvalues.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
    let target = group.omega * group.omega;
    let cols: Vec<usize> = (0..spectrum.eigenvalues.len())
        .filter(|&i| (spectrum.eigenvalues[i] - target).abs() <= CLUSTER_TOL * scale.max(1.0) * 10.0)
        .collect();
    let w = model.table.omegas();
    let x = DMatrix::from_fn(w.len(), cols.len(), |p, c| w[p].sqrt() * spectrum.eigenvectors[(p, cols[c])]);
    let residue_norm = if cols.is_empty() { 0.0 } else { model.grid_outer_norm(&x) / group.omega };
    Ok(PoleRecord {
        omega: group.omega,
        rank: kernel_dim + uncoupled,
        kind: PoleKind::Coincident,
        method: PoleMethod::Projection,
        residue_norm,
        resolvent_rank: kernel_dim,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BookkeepingRecord {
    pub group: usize,
    pub omega: f64,
    pub dim: usize,
    pub kernel_dim: usize,
    pub n_left: usize,
    pub n_right: usize,
    pub padding: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoleScan {
    pub interior: Vec<PoleRecord>,
    /// One record per degeneracy group, rank 0 included.
    pub coincident: Vec<PoleRecord>,
    pub casida: Vec<PoleRecord>,
    pub bookkeeping: Vec<BookkeepingRecord>,
    pub upper_bound: f64,
    /// Disagreements between independent searches; empty for a healthy model.
    pub pathologies: Vec<String>,
}

impl PoleScan {
    /// All poles of the RPA response in the scan domain, ascending.
    pub fn poles(&self) -> Vec<PoleRecord> {
        let mut all: Vec<PoleRecord> = self.interior.iter().chain(&self.coincident).filter(|p| p.rank > 0).cloned().collect();
        all.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        all
    }
}

pub fn find_pole_crossings(model: &SymmetrizedModel, cfg: &ScanConfig) -> Result<Vec<PoleRecord>> {
    Ok(find_rpa_poles(model, cfg)?.interior)
}

pub fn find_rpa_poles(model: &SymmetrizedModel, cfg: &ScanConfig) -> Result<PoleScan> {
    if !(cfg.padding > 0.0) {
        return Err(Error::InvalidDomain(format!("scan padding {} must be > 0", cfg.padding)));
    }
    let upper = cfg.omega_max.unwrap_or_else(|| scan_upper_bound(model));
    if !(upper > cfg.omega_min) {
        return Err(Error::InvalidDomain(format!("scan domain ({}, {upper}) is empty", cfg.omega_min)));
    }
    let mut pathologies = Vec::new();
    let groups: Vec<usize> =
        (0..model.groups.len()).filter(|&j| model.groups[j].omega > cfg.omega_min && model.groups[j].omega < upper).collect();
    let coincident = groups.iter().map(|&j| rank_at_coincident_pole(model, j)).collect::<Result<Vec<_>>>()?;

    // Padding per boundary, shrunk until the counting balance holds.
    let omegas: Vec<f64> = groups.iter().map(|&j| model.groups[j].omega).collect();
    let mut bookkeeping = Vec::with_capacity(groups.len());
    for (slot, &j) in groups.iter().enumerate() {
        let w = omegas[slot];
        let left_room = if slot == 0 { w - cfg.omega_min } else { w - omegas[slot - 1] };
        let right_room = if slot + 1 == omegas.len() { upper - w } else { omegas[slot + 1] - w };
        let mut pad = cfg.padding.min(0.25 * left_room).min(0.25 * right_room);
        let dim = model.groups[j].dim;
        let kernel_dim = coincident[slot].resolvent_rank;
        loop {
            let n_left = counting_function(model, w - pad, 1.0)?;
            let n_right = counting_function(model, w + pad, 1.0)?;
            let holds = n_right + kernel_dim == n_left + dim;
            if holds || pad < 1e-12 * w.max(1.0) {
                if !holds {
                    pathologies.push(format!("counting balance fails at {w} (left {n_left}, right {n_right})"));
                }
                bookkeeping.push(BookkeepingRecord { group: j, omega: w, dim, kernel_dim, n_left, n_right, padding: pad, holds });
                break;
            }
            pad *= 0.1;
        }
    }

    let mut intervals = Vec::with_capacity(omegas.len() + 1);
    let mut lo = cfg.omega_min;
    for (slot, w) in omegas.iter().enumerate() {
        intervals.push((lo, w - bookkeeping[slot].padding));
        lo = w + bookkeeping[slot].padding;
    }
    intervals.push((lo, upper));

    let found: Vec<Vec<f64>> = intervals
        .par_iter()
        .map(|&(a, b)| -> Result<Vec<f64>> {
            if !(a < b) {
                return Ok(Vec::new());
            }
            let mu_a = model.eigs_desc(a)?;
            let mu_b = model.eigs_desc(b)?;
            let mut out = Vec::new();
            for i in 0..mu_a.len() {
                if mu_a[i] > 1.0 && mu_b[i] <= 1.0 {
                    out.push(bisect(model, i, a, b)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut crossings: Vec<f64> = found.into_iter().flatten().collect();
    crossings.sort_by(f64::total_cmp);

    let mut interior = Vec::new();
    let mut i = 0;
    while i < crossings.len() {
        let mut j = i + 1;
        while j < crossings.len() && crossings[j] - crossings[j - 1] <= MERGE_TOL {
            j += 1;
        }
        let omega = crossings[i..j].iter().sum::<f64>() / (j - i) as f64;
        let v = unit_eigvecs(&model.reduced_real(omega)?)?;
        let mut rank = v.ncols();
        if rank != j - i {
            pathologies.push(format!("{} crossings at {omega} but eigenvalue-1 multiplicity {rank}", j - i));
        }
        let residue_norm = if rank > 0 {
            interior_residue(model, omega, &v)?
        } else {
            rank = j - i;
            f64::NAN
        };
        interior.push(PoleRecord {
            omega,
            rank,
            kind: PoleKind::Interior,
            method: PoleMethod::Bisection,
            residue_norm,
            resolvent_rank: rank,
        });
        i = j;
    }

    if cfg.omega_max.is_none() && counting_function(model, upper, 1.0)? != 0 {
        pathologies.push(format!("eigenvalues above 1 at the scan bound {upper}"));
    }

    let spectrum = casida_from_reduced(&model.table, &model.g)?;
    let casida: Vec<PoleRecord> =
        casida_poles(model, &spectrum).into_iter().filter(|p| p.omega > cfg.omega_min && p.omega < upper).collect();
    let mut scan = PoleScan { interior, coincident, casida, bookkeeping, upper_bound: upper, pathologies };
    let mine = scan.poles();
    if mine.len() != scan.casida.len() {
        scan.pathologies.push(format!("{} poles by scan but {} by Casida", mine.len(), scan.casida.len()));
    } else {
        for (a, b) in mine.iter().zip(&scan.casida) {
            if (a.omega - b.omega).abs() > AGREEMENT_TOL || a.rank != b.rank {
                scan.pathologies.push(format!("scan pole ({}, rank {}) vs Casida ({}, rank {})", a.omega, a.rank, b.omega, b.rank));
            }
        }
    }
    for p in &scan.pathologies {
        log::warn!("{p}");
    }
    Ok(scan)
}
