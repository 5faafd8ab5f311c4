//! Non-interacting response `chi0` of the reference Hamiltonian.
//!
//! Everything is built from the occupied-virtual transition table: with
//! `Phi` the matrix whose columns are transition densities,
//! `chi0(z) = Phi * diag(2 w_p / (z^2 - w_p^2)) * Phi^T * dx` and
//! `chi0(t) = Phi * diag(-2 sin(w_p t)) * Phi^T * dx`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{EigenSolution, OrbitalOccupation};
use crate::linalg::{self, CMatrix};

pub const DEFAULT_GROUP_TOL: f64 = 1e-9;
/// Relative singular-value cutoff of every rank decision.
pub const RANK_TOL: f64 = 1e-10;
/// Closest approach of `z^2` to a squared transition frequency.
pub const POLE_GUARD: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct TransitionPair {
    pub k: usize,
    pub a: usize,
    pub omega: f64,
    pub phi: DVector<f64>,
}

/// A cluster of (numerically) degenerate transitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyGroup {
    pub omega: f64,
    pub members: Vec<usize>,
    /// Dimension of the span of the member transition densities.
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct TransitionTable {
    pub pairs: Vec<TransitionPair>,
    pub groups: Vec<DegeneracyGroup>,
    pub dx: f64,
    pub n_points: usize,
    /// Columns are the transition densities, in pair order.
    pub phi: DMatrix<f64>,
    pub group_tol: f64,
}

impl TransitionTable {
    /// Builds a table from explicit pairs; `k`/`a` labels are informational.
    pub fn from_pairs(dx: f64, n_points: usize, mut pairs: Vec<TransitionPair>, group_tol: f64) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::InvalidDomain(format!("dx = {dx} must be > 0")));
        }
        if !(group_tol >= 0.0) {
            return Err(Error::InvalidDomain(format!("group_tol = {group_tol} must be >= 0")));
        }
        for p in &pairs {
            if p.phi.len() != n_points {
                return Err(Error::ShapeMismatch { expected: n_points, got: p.phi.len() });
            }
            if !(p.omega > 0.0 && p.omega.is_finite()) {
                return Err(Error::InvalidDomain(format!("transition frequency {} must be > 0", p.omega)));
            }
            if p.phi.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("transition density".into()));
            }
        }
        pairs.sort_by(|p, q| p.omega.total_cmp(&q.omega).then(p.k.cmp(&q.k)).then(p.a.cmp(&q.a)));
        let mut phi = DMatrix::zeros(n_points, pairs.len());
        for (c, p) in pairs.iter().enumerate() {
            phi.set_column(c, &p.phi);
        }

        let floor = rank_floor(&phi, dx);
        let mut groups: Vec<DegeneracyGroup> = Vec::new();
        let mut start = 0;
        for i in 1..=pairs.len() {
            if i == pairs.len() || pairs[i].omega - pairs[i - 1].omega > group_tol {
                let members: Vec<usize> = (start..i).collect();
                let omega = members.iter().map(|&m| pairs[m].omega).sum::<f64>() / members.len() as f64;
                let block = phi.columns(start, i - start) * dx.sqrt();
                let dim = linalg::numerical_rank(&block.into_owned(), RANK_TOL, floor);
                groups.push(DegeneracyGroup { omega, members, dim });
                start = i;
            }
        }
        Ok(Self { pairs, groups, dx, n_points, phi, group_tol })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.omega).collect()
    }

    pub fn max_omega(&self) -> f64 {
        self.pairs.last().map_or(0.0, |p| p.omega)
    }

    /// Lowest transition frequency, `+inf` for an empty table.
    pub fn min_omega(&self) -> f64 {
        self.pairs.first().map_or(f64::INFINITY, |p| p.omega)
    }

    /// `2 w_p / (z^2 - w_p^2)` per pair.
    pub fn freq_coeffs(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let z2 = z * z;
        self.pairs
            .iter()
            .map(|p| {
                let d = z2 - p.omega * p.omega;
                if d.norm() <= POLE_GUARD {
                    Err(Error::AtPole { re: z.re, im: z.im })
                } else {
                    Ok(2.0 * p.omega / d)
                }
            })
            .collect()
    }

    /// `-2 sin(w_p t)` per pair.
    pub fn time_coeffs(&self, t: f64) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.pairs.iter().map(|p| -2.0 * (p.omega * t).sin()).collect())
    }

    /// `Phi * C * Phi^T * dx` for a real coefficient matrix in transition space.
    pub fn expand(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        &self.phi * c * self.phi.transpose() * self.dx
    }

    pub fn expand_c(&self, c: &CMatrix) -> CMatrix {
        let phi = linalg::to_complex(&self.phi);
        &phi * c * phi.transpose() * Complex64::new(self.dx, 0.0)
    }

    /// Index of the degeneracy group containing `omega`, if any.
    pub fn group_at(&self, omega: f64) -> Option<usize> {
        self.groups.iter().position(|g| (g.omega - omega).abs() <= self.group_tol.max(1e-12))
    }
}

/// Absolute floor for rank decisions on weighted transition densities.
pub(crate) fn rank_floor(phi: &DMatrix<f64>, dx: f64) -> f64 {
    let top = phi.column_iter().map(|c| c.norm()).fold(0.0, f64::max) * dx.sqrt();
    1e-12 * top.max(f64::MIN_POSITIVE)
}

pub fn build_transitions(eig: &EigenSolution, occ: &OrbitalOccupation, group_tol: f64) -> Result<TransitionTable> {
    occ.validate(eig, OrbitalOccupation::DEFAULT_GAP_TOL)?;
    let n = eig.grid.len();
    let mut pairs = Vec::with_capacity(occ.n_occupied * occ.n_virtual);
    for k in 0..occ.n_occupied {
        let psi_k = eig.eigenvectors.column(k);
        for a in occ.n_occupied..occ.n_occupied + occ.n_virtual {
            let psi_a = eig.eigenvectors.column(a);
            let phi = psi_k.component_mul(&psi_a);
            pairs.push(TransitionPair { k, a, omega: eig.eigenvalues[a] - eig.eigenvalues[k], phi });
        }
    }
    TransitionTable::from_pairs(eig.grid.dx(), n, pairs, group_tol)
}

pub fn chi0_freq(table: &TransitionTable, z: Complex64) -> Result<CMatrix> {
    let c = table.freq_coeffs(z)?;
    let n = table.n_points;
    let mut out = CMatrix::zeros(n, n);
    for (p, cp) in table.pairs.iter().zip(c) {
        let w = cp * table.dx;
        for j in 0..n {
            let pj = p.phi[j];
            if pj == 0.0 {
                continue;
            }
            for i in 0..n {
                out[(i, j)] += w * (p.phi[i] * pj);
            }
        }
    }
    Ok(out)
}

pub fn chi0_time(table: &TransitionTable, t: f64) -> Result<DMatrix<f64>> {
    let c = table.time_coeffs(t)?;
    let n = table.n_points;
    let mut out = DMatrix::zeros(n, n);
    for (p, cp) in table.pairs.iter().zip(c) {
        out.ger(cp * table.dx, &p.phi, &p.phi, 1.0);
    }
    Ok(out)
}

/// `(omega_j, dim V_j)` for every group that is a genuine pole.
pub fn chi0_pole_table(table: &TransitionTable) -> Vec<(f64, usize)> {
    table.groups.iter().filter(|g| g.dim > 0).map(|g| (g.omega, g.dim)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble_hamiltonian, build_grid, diagonalize, PotentialSpec};

    fn harmonic(n_occ: usize, n_virt: usize) -> (EigenSolution, TransitionTable) {
        let g = build_grid(-10.0, 10.0, 401).unwrap();
        let h = assemble_hamiltonian(&g, &PotentialSpec::Harmonic { k: 1.0 }).unwrap();
        let eig = diagonalize(&h).unwrap();
        let t = build_transitions(&eig, &OrbitalOccupation::new(n_occ, n_virt), DEFAULT_GROUP_TOL).unwrap();
        (eig, t)
    }

    fn single(omega: f64) -> TransitionTable {
        let p = TransitionPair { k: 0, a: 1, omega, phi: DVector::from_element(1, 1.0) };
        TransitionTable::from_pairs(1.0, 1, vec![p], DEFAULT_GROUP_TOL).unwrap()
    }

    #[test]
    fn harmonic_frequencies() {
        let (_, t) = harmonic(1, 3);
        assert_eq!(t.len(), 3);
        for (p, want) in t.pairs.iter().zip([1.0, 2.0, 3.0]) {
            assert!((p.omega - want).abs() < 1e-2, "{} vs {want}", p.omega);
        }
        let poles = chi0_pole_table(&t);
        assert_eq!(poles.iter().map(|p| p.1).collect::<Vec<_>>(), vec![1, 1, 1]);
    }

    #[test]
    fn single_pair_one_group() {
        let (_, t) = harmonic(1, 1);
        assert_eq!(t.groups.len(), 1);
        assert_eq!(t.groups[0].dim, 1);
    }

    #[test]
    fn empty_virtual_space() {
        let (_, t) = harmonic(1, 0);
        assert!(t.is_empty());
        assert!(chi0_pole_table(&t).is_empty());
    }

    #[test]
    fn single_pair_coefficient() {
        let t = single(1.0);
        let m = chi0_freq(&t, Complex64::new(0.0, 2.0)).unwrap();
        assert!((m[(0, 0)] - Complex64::new(-0.4, 0.0)).norm() < 1e-15);
        assert!(matches!(chi0_freq(&t, Complex64::new(1.0, 0.0)), Err(Error::AtPole { .. })));
    }

    #[test]
    fn static_response_is_nsd() {
        let (_, t) = harmonic(2, 4);
        let m = chi0_freq(&t, Complex64::new(0.0, 0.0)).unwrap().map(|c| c.re);
        let (vals, _) = linalg::sym_eigen_sorted(&linalg::symmetrize(&m)).unwrap();
        assert!(vals[vals.len() - 1] <= 1e-10);
    }

    #[test]
    fn time_domain_basics() {
        let t = single(1.0);
        assert_eq!(chi0_time(&t, 0.0).unwrap()[(0, 0)], 0.0);
        let v = chi0_time(&t, 0.7).unwrap()[(0, 0)];
        assert!((v + 2.0 * 0.7_f64.sin()).abs() < 1e-15);
        let w = chi0_time(&t, 0.7 + 2.0 * std::f64::consts::PI).unwrap()[(0, 0)];
        assert!((v - w).abs() < 1e-12);
        assert!(matches!(chi0_time(&t, -0.1), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn resolvent_sum_oracle() {
        // <phi_1, chi0(0.5) phi_1> from orbitals directly: with one occupied
        // orbital, sum over virtual a of 2 w_a <phi_1, psi0 psi_a>^2 / (z^2 - w_a^2).
        let (eig, t) = harmonic(1, 3);
        let dx = eig.grid.dx();
        let psi0 = eig.orbital(0);
        let phi1 = t.pairs[0].phi.clone();
        let m = chi0_freq(&t, Complex64::new(0.5, 0.0)).unwrap().map(|c| c.re);
        let got = dx * phi1.dot(&(&m * &phi1));
        let mut want = 0.0;
        for a in 1..4 {
            let w = eig.eigenvalues[a] - eig.eigenvalues[0];
            let overlap = dx * phi1.dot(&psi0.component_mul(&eig.orbital(a)));
            want += 2.0 * w * overlap * overlap / (0.25 - w * w);
        }
        assert!((got - want).abs() < 1e-12 * want.abs());
    }

    #[test]
    fn fourier_consistency() {
        let (_, t) = harmonic(1, 2);
        let z = Complex64::new(1.3, 0.4);
        let horizon = 10.0_f64.ln() * 10.0 / 0.4 + 1.0;
        let steps = 120_000;
        let h = horizon / steps as f64;
        let n = t.n_points;
        let mut acc = CMatrix::zeros(n, n);
        // Transition-space quadrature of the trapezoid rule, expanded once.
        let mut coeff = vec![Complex64::new(0.0, 0.0); t.len()];
        for s in 0..=steps {
            let time = s as f64 * h;
            let w = if s == 0 || s == steps { 0.5 * h } else { h };
            let e = (Complex64::i() * z * time).exp() * w;
            for (c, d) in coeff.iter_mut().zip(t.time_coeffs(time).unwrap()) {
                *c += e * d;
            }
        }
        for (p, c) in t.pairs.iter().zip(coeff) {
            for i in 0..n {
                for j in 0..n {
                    acc[(i, j)] += c * p.phi[i] * p.phi[j] * t.dx;
                }
            }
        }
        let exact = chi0_freq(&t, z).unwrap();
        assert!(linalg::max_abs_c(&(acc - exact)) < 1e-6);
    }

    #[test]
    fn block_model_ranks() {
        // Two identical wells on disjoint halves of a grid.
        let g = build_grid(-6.0, 6.0, 121).unwrap();
        let h = assemble_hamiltonian(&g, &PotentialSpec::Harmonic { k: 1.0 }).unwrap();
        let eig = diagonalize(&h).unwrap();
        let phi = eig.orbital(0).component_mul(&eig.orbital(1));
        let omega = eig.eigenvalues[1] - eig.eigenvalues[0];
        let n = 2 * g.len();
        let left = DVector::from_fn(n, |i, _| if i < g.len() { phi[i] } else { 0.0 });
        let right = DVector::from_fn(n, |i, _| if i >= g.len() { phi[i - g.len()] } else { 0.0 });
        let mk = |a: DVector<f64>, b: DVector<f64>| {
            TransitionTable::from_pairs(
                g.dx(),
                n,
                vec![TransitionPair { k: 0, a: 1, omega, phi: a }, TransitionPair { k: 2, a: 3, omega, phi: b }],
                DEFAULT_GROUP_TOL,
            )
            .unwrap()
        };
        let independent = mk(left.clone(), right);
        let stacked = independent.phi.clone();
        assert_eq!(chi0_pole_table(&independent), vec![(omega, linalg::numerical_rank(&stacked, 1e-10, 0.0))]);
        assert_eq!(chi0_pole_table(&independent)[0].1, 2);
        let dependent = mk(left.clone(), left);
        assert_eq!(chi0_pole_table(&dependent)[0].1, 1);
    }

    #[test]
    fn double_well_degenerate_groups() {
        use crate::grid::Well;
        let g = build_grid(-14.0, 14.0, 281).unwrap();
        let wells = vec![Well { charge: -1.0, center: -5.0, softening: 1.0 }, Well { charge: -1.0, center: 5.0, softening: 1.0 }];
        let h = assemble_hamiltonian(&g, &PotentialSpec::SoftCoulombWells { wells }).unwrap();
        let eig = diagonalize(&h).unwrap();
        // A loose tolerance merges tunnelling-split gaps into shared groups.
        let t = build_transitions(&eig, &OrbitalOccupation::new(2, 2), 1e-3).unwrap();
        assert!(t.groups.len() < t.len());
        let floor = rank_floor(&t.phi, t.dx);
        for grp in &t.groups {
            let mut block = DMatrix::zeros(t.n_points, grp.members.len());
            for (c, &m) in grp.members.iter().enumerate() {
                block.set_column(c, &(&t.pairs[m].phi * t.dx.sqrt()));
            }
            assert_eq!(grp.dim, linalg::numerical_rank(&block, RANK_TOL, floor));
        }
    }

    #[test]
    fn groups_are_separated() {
        let (_, t) = harmonic(2, 6);
        for w in t.groups.windows(2) {
            assert!(w[1].omega - w[0].omega > t.group_tol);
        }
    }
}
