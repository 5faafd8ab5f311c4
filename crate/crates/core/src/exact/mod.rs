//! Exact two-fermion reference on the grid.
//!
//! States live on the antisymmetric pair basis `|ij> = (e_i e_j - e_j e_i)/sqrt(2)`
//! with `i < j`. A unit coefficient vector `u` corresponds to the wave function
//! `Psi(x_i, x_j) = u_ij / (sqrt(2) dx)`, normalized as `dx^2 sum |Psi|^2 = 1`.

mod response;
mod tdse;

pub use response::{exact_chi_freq, exact_chi_time, exact_pole_ranks, locate_exact_poles, resolvent_chi_freq, BRIGHT_TOL};
pub use tdse::{
    kubo_check, kubo_convolution, spectral_peak, tdse_propagate, KuboReport, PerturbationSetup, TdseSeries, TimeProfile, NORM_DRIFT_TOL,
    STEP_LIMIT,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{OneBodyHamiltonian, UniformGrid};
use crate::kernels::InteractionKernel;
use crate::linalg;

pub const DEFAULT_DIM_CAP: usize = 20000;
pub const DEFAULT_GAP_TOL: f64 = 1e-8;
/// Largest fraction of the total density-coupling weight the retained states may miss.
pub const TRUNCATION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct TwoFermionBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl TwoFermionBasis {
    pub fn new(n_points: usize) -> Self {
        let mut pairs = Vec::with_capacity(n_points * n_points.saturating_sub(1) / 2);
        for i in 0..n_points {
            for j in i + 1..n_points {
                pairs.push((i, j));
            }
        }
        Self { n: n_points, pairs }
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair(&self, p: usize) -> (usize, usize) {
        self.pairs[p]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Index of `(i, j)` for `i < j`.
    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= j || j >= self.n {
            return None;
        }
        Some(i * (2 * self.n - i - 1) / 2 + (j - i - 1))
    }

    /// Index and sign of `|ij>` for any ordering; `None` on the diagonal.
    pub fn signed_index(&self, i: usize, j: usize) -> Option<(usize, f64)> {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.index(i, j).map(|p| (p, 1.0)),
            std::cmp::Ordering::Greater => self.index(j, i).map(|p| (p, -1.0)),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// Diagonal of the one-body multiplication operator `v(x_i) + v(x_j)`.
    pub fn one_body_diagonal(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.pairs.iter().map(|&(i, j)| v[i] + v[j]))
    }
}

#[derive(Clone, Debug)]
pub struct ManyBodyHamiltonian {
    pub matrix: DMatrix<f64>,
    pub basis: TwoFermionBasis,
    pub grid: UniformGrid,
}

/// `h (x) 1 + 1 (x) h + w(x_1 - x_2)` on the antisymmetric pair space.
pub fn build_mb_hamiltonian(h: &OneBodyHamiltonian, w: &InteractionKernel, dim_cap: usize) -> Result<ManyBodyHamiltonian> {
    w.validate()?;
    let n = h.grid.len();
    if h.matrix.nrows() != n || h.matrix.ncols() != n {
        return Err(Error::ShapeMismatch { expected: n, got: h.matrix.nrows() });
    }
    let basis = TwoFermionBasis::new(n);
    let d = basis.dim();
    if d > dim_cap {
        return Err(Error::MemoryBudget { dim: d, cap: dim_cap });
    }
    let dx = h.grid.dx();
    let hm = &h.matrix;
    let mut m = DMatrix::zeros(d, d);
    for (p, &(i, j)) in basis.pairs().iter().enumerate() {
        // H|ij> = sum_k h_ki |kj> + h_kj |ik>
        for k in 0..n {
            let a = hm[(k, i)];
            if a != 0.0 {
                if let Some((q, s)) = basis.signed_index(k, j) {
                    m[(q, p)] += s * a;
                }
            }
            let b = hm[(k, j)];
            if b != 0.0 {
                if let Some((q, s)) = basis.signed_index(i, k) {
                    m[(q, p)] += s * b;
                }
            }
        }
        let v = w.pair_value(h.grid.point(j) - h.grid.point(i), dx);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("interaction at pair ({i}, {j})")));
        }
        m[(p, p)] += v;
    }
    Ok(ManyBodyHamiltonian { matrix: linalg::symmetrize(&m), basis, grid: h.grid.clone() })
}

/// Lowest many-body eigenpairs with unit coefficient vectors.
#[derive(Clone, Debug)]
pub struct ManyBodySpectrum {
    pub energies: DVector<f64>,
    /// Columns are unit coefficient vectors on the pair basis.
    pub states: DMatrix<f64>,
    pub basis: TwoFermionBasis,
    pub grid: UniformGrid,
    pub gap: f64,
    pub max_density: f64,
    pub orthonormality_residual: f64,
    /// Fraction of the total coupling weight carried by discarded states.
    pub missing_weight: f64,
}

impl ManyBodySpectrum {
    pub fn n_states(&self) -> usize {
        self.energies.len()
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    /// `E_j - E_0` for the retained excited states.
    pub fn excitations(&self) -> Vec<f64> {
        let e0 = self.energies[0];
        self.energies.iter().skip(1).map(|e| e - e0).collect()
    }

    /// Wave-function value `Psi_j(x_a, x_b)` with antisymmetric extension.
    pub fn wavefunction(&self, j: usize, a: usize, b: usize) -> f64 {
        let dx = self.grid.dx();
        self.basis.signed_index(a, b).map_or(0.0, |(p, s)| s * self.states[(p, j)] / (std::f64::consts::SQRT_2 * dx))
    }
}

pub fn mb_spectrum(h: &ManyBodyHamiltonian, n_states: usize, gap_tol: f64) -> Result<ManyBodySpectrum> {
    let d = h.basis.dim();
    if n_states < 2 || n_states > d {
        return Err(Error::InvalidDomain(format!("n_states = {n_states} must lie in [2, {d}]")));
    }
    let (vals, vecs) = linalg::sym_eigen_sorted(&h.matrix)?;
    let gap = vals[1] - vals[0];
    if gap <= gap_tol {
        return Err(Error::DegenerateGroundState { gap, tol: gap_tol });
    }
    let states = vecs.columns(0, n_states).into_owned();
    let gram = states.transpose() * &states;
    let residual = linalg::max_abs(&(gram - DMatrix::identity(n_states, n_states)));
    if residual > 1e-9 {
        return Err(Error::NumericalFailure(format!("many-body orthonormality residual {residual:e}")));
    }
    let mut spec = ManyBodySpectrum {
        energies: vals.rows(0, n_states).into_owned(),
        states,
        basis: h.basis.clone(),
        grid: h.grid.clone(),
        gap,
        max_density: 0.0,
        orthonormality_residual: residual,
        missing_weight: 0.0,
    };
    let s = DensityCoupling::new(&spec);
    spec.max_density = s.ground_density(&spec).iter().fold(0.0, |a, &b| a.max(b));
    // Completeness: sum over all states of ||S Psi_j||^2 is dx ||S||_F^2.
    let dx = spec.grid.dx();
    let total = dx * s.matrix.norm_squared() - s.weight(&spec.states.column(0).into_owned());
    let kept: f64 = (1..n_states).map(|j| s.weight(&spec.states.column(j).into_owned())).sum();
    spec.missing_weight = if total > 0.0 { ((total - kept) / total).max(0.0) } else { 0.0 };
    if n_states < d && spec.missing_weight > TRUNCATION_TOL {
        return Err(Error::TruncationWeight { missing: spec.missing_weight });
    }
    Ok(spec)
}

/// `(S Phi)(x_i) = 2 sum_j Psi_0(x_i, x_j) Phi(x_i, x_j) dx` as an `n x D`
/// matrix acting on coefficient vectors.
#[derive(Clone, Debug)]
pub struct DensityCoupling {
    pub matrix: DMatrix<f64>,
    pub dx: f64,
}

impl DensityCoupling {
    pub fn new(spec: &ManyBodySpectrum) -> Self {
        Self::from_ground(&spec.basis, &spec.states.column(0).into_owned(), spec.grid.dx())
    }

    /// Coupling built around the unit ground-state coefficients `u0`.
    pub fn from_ground(basis: &TwoFermionBasis, u0: &DVector<f64>, dx: f64) -> Self {
        let n = basis.n_points();
        let mut m = DMatrix::zeros(n, basis.dim());
        for (p, &(i, j)) in basis.pairs().iter().enumerate() {
            // Psi_0 Phi = u0 v / (2 dx^2) is symmetric under i <-> j.
            m[(i, p)] = u0[p] / dx;
            m[(j, p)] = u0[p] / dx;
        }
        Self { matrix: m, dx }
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.matrix * u
    }

    /// `||S Phi||^2` in the grid norm.
    pub fn weight(&self, u: &DVector<f64>) -> f64 {
        self.apply(u).norm_squared() * self.dx
    }

    pub fn ground_density(&self, spec: &ManyBodySpectrum) -> DVector<f64> {
        self.apply(&spec.states.column(0).into_owned())
    }

    /// `S Psi_j` for every retained excited state, as columns.
    pub fn excited_images(&self, spec: &ManyBodySpectrum) -> DMatrix<f64> {
        &self.matrix * spec.states.columns(1, spec.n_states() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble_hamiltonian, build_grid, diagonalize, PotentialSpec};

    pub(crate) fn harmonic_mb(n: usize, half: f64, w: &InteractionKernel) -> (OneBodyHamiltonian, ManyBodyHamiltonian) {
        let g = build_grid(-half, half, n).unwrap();
        let h = assemble_hamiltonian(&g, &PotentialSpec::Harmonic { k: 1.0 }).unwrap();
        let mb = build_mb_hamiltonian(&h, w, DEFAULT_DIM_CAP).unwrap();
        (h, mb)
    }

    #[test]
    fn basis_counting_and_indexing() {
        let b = TwoFermionBasis::new(3);
        assert_eq!(b.dim(), 3);
        assert_eq!(b.pairs(), &[(0, 1), (0, 2), (1, 2)]);
        let b = TwoFermionBasis::new(9);
        for (p, &(i, j)) in b.pairs().iter().enumerate() {
            assert_eq!(b.index(i, j), Some(p));
            assert_eq!(b.signed_index(j, i), Some((p, -1.0)));
        }
        assert_eq!(b.signed_index(4, 4), None);
    }

    #[test]
    fn memory_cap() {
        let g = build_grid(-1.0, 1.0, 20).unwrap();
        let h = assemble_hamiltonian(&g, &PotentialSpec::Harmonic { k: 1.0 }).unwrap();
        assert!(matches!(build_mb_hamiltonian(&h, &InteractionKernel::Zero, 100), Err(Error::MemoryBudget { dim: 190, cap: 100 })));
    }

    #[test]
    fn non_interacting_spectrum_is_pair_sums() {
        let (h, mb) = harmonic_mb(16, 5.0, &InteractionKernel::Zero);
        let eps = diagonalize(&h).unwrap().eigenvalues;
        let mut sums = Vec::new();
        for i in 0..eps.len() {
            for j in i + 1..eps.len() {
                sums.push(eps[i] + eps[j]);
            }
        }
        sums.sort_by(f64::total_cmp);
        let spec = mb_spectrum(&mb, mb.basis.dim(), DEFAULT_GAP_TOL).unwrap();
        for (a, b) in spec.energies.iter().zip(&sums) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!((spec.energies[0] - eps[0] - eps[1]).abs() < 1e-10);
        assert!(spec.missing_weight < 1e-12);
    }

    #[test]
    fn truncation_weight_is_checked() {
        let (_, mb) = harmonic_mb(16, 5.0, &InteractionKernel::Zero);
        assert!(matches!(mb_spectrum(&mb, 10, DEFAULT_GAP_TOL), Err(Error::TruncationWeight { .. })));
    }

    #[test]
    fn harmonic_two_fermion_energies() {
        let (_, mb) = harmonic_mb(56, 6.5, &InteractionKernel::Zero);
        let spec = mb_spectrum(&mb, mb.basis.dim(), DEFAULT_GAP_TOL).unwrap();
        // Three-point stencil error on the low oscillator levels stays below dx^2 / 2.
        let dx = spec.grid.dx();
        assert!((spec.energies[0] - 2.0).abs() < 0.5 * dx * dx, "{}", spec.energies[0]);
        assert!((spec.energies[1] - 3.0).abs() < 0.5 * dx * dx, "{}", spec.energies[1]);
    }

    #[test]
    fn repulsion_raises_ground_energy() {
        let w = InteractionKernel::SoftCoulomb { softening: 1.0, strength: 1.0 };
        let (h, mb) = harmonic_mb(20, 5.0, &w);
        let eps = diagonalize(&h).unwrap().eigenvalues;
        let spec = mb_spectrum(&mb, mb.basis.dim(), DEFAULT_GAP_TOL).unwrap();
        assert!(spec.energies[0] >= eps[0] + eps[1]);
    }

    #[test]
    fn reordered_basis_reproduces_eigenvalues() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let w = InteractionKernel::SoftCoulomb { softening: 0.7, strength: 1.3 };
        let (_, mb) = harmonic_mb(18, 5.0, &w);
        let d = mb.basis.dim();
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(11));
        let shuffled = DMatrix::from_fn(d, d, |i, j| mb.matrix[(perm[i], perm[j])]);
        let (a, _) = linalg::sym_eigen_sorted(&mb.matrix).unwrap();
        let (b, _) = linalg::sym_eigen_sorted(&shuffled).unwrap();
        assert!((a - b).amax() < 1e-9);
    }

    #[test]
    fn ground_density_integrates_to_two() {
        let w = InteractionKernel::SoftCoulomb { softening: 1.0, strength: 1.0 };
        let (_, mb) = harmonic_mb(20, 5.0, &w);
        let spec = mb_spectrum(&mb, mb.basis.dim(), DEFAULT_GAP_TOL).unwrap();
        let s = DensityCoupling::new(&spec);
        let rho = s.ground_density(&spec);
        assert!(rho.iter().all(|&r| r >= -1e-14));
        assert!((rho.sum() * spec.grid.dx() - 2.0).abs() < 1e-8);
        // Direct evaluation of 2 sum_j Psi0(x_i, x_j)^2 dx.
        let dx = spec.grid.dx();
        for i in [3, 10] {
            let direct: f64 = (0..20).map(|j| 2.0 * spec.wavefunction(0, i, j).powi(2) * dx).sum();
            assert!((direct - rho[i]).abs() < 1e-12);
        }
    }
}
