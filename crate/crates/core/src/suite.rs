//! Model configurations and the bundled validation models.
//!
//! [`ModelConfig`] is the serializable description used by the CLI. The
//! bundled suite spans harmonic and double-well traps with one or two
//! occupied orbitals and both positive semidefinite kernel variants.
//! [`coincident_models`] adds small synthetic tables with degenerate
//! transitions, some with kernels scaled so that a coincident frequency is
//! itself a pole of `(1 - chi_s)^{-1}`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{assemble_hamiltonian, build_grid, diagonalize, EigenSolution, OrbitalOccupation, PotentialSpec, UniformGrid, Well};
use crate::kernels::{alda_kernel, assemble_kernel_matrix, kernel_sqrt, InteractionKernel, KernelMatrix, KernelSqrt, XcModel};
use crate::linalg;
use crate::poles::SymmetrizedModel;
use crate::response::{build_transitions, TransitionPair, TransitionTable, DEFAULT_GROUP_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

fn default_group_tol() -> f64 {
    DEFAULT_GROUP_TOL
}

fn default_gap_tol() -> f64 {
    OrbitalOccupation::DEFAULT_GAP_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub name: String,
    pub grid: GridConfig,
    pub potential: PotentialSpec,
    pub n_occupied: usize,
    pub n_virtual: usize,
    pub kernel: InteractionKernel,
    /// Optional adiabatic local correction added to the kernel.
    #[serde(default)]
    pub xc: Option<XcModel>,
    #[serde(default = "default_group_tol")]
    pub group_tol: f64,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
}

/// Reference table, kernel and kernel root of one model.
#[derive(Clone, Debug)]
pub struct SuiteModel {
    pub name: String,
    pub table: TransitionTable,
    pub kernel: KernelMatrix,
    pub fsqrt: KernelSqrt,
}

impl SuiteModel {
    pub fn new(name: impl Into<String>, table: TransitionTable, kernel: KernelMatrix) -> Result<Self> {
        let fsqrt = kernel_sqrt(&kernel)?;
        Ok(Self { name: name.into(), table, kernel, fsqrt })
    }

    pub fn symmetrized(&self) -> Result<SymmetrizedModel> {
        SymmetrizedModel::new(&self.table, &self.kernel, &self.fsqrt)
    }
}

/// A grid model together with its one-body spectrum.
#[derive(Clone, Debug)]
pub struct BuiltModel {
    pub grid: UniformGrid,
    pub eig: EigenSolution,
    pub occupation: OrbitalOccupation,
    pub model: SuiteModel,
}

impl ModelConfig {
    pub fn occupation(&self) -> OrbitalOccupation {
        OrbitalOccupation::new(self.n_occupied, self.n_virtual)
    }

    pub fn build_grid(&self) -> Result<UniformGrid> {
        build_grid(self.grid.x_min, self.grid.x_max, self.grid.n_points)
    }

    pub fn build(&self) -> Result<BuiltModel> {
        let grid = self.build_grid()?;
        let h = assemble_hamiltonian(&grid, &self.potential)?;
        let eig = diagonalize(&h)?;
        eig.check_decay(self.n_occupied);
        let occupation = self.occupation();
        occupation.validate(&eig, self.gap_tol)?;
        let table = build_transitions(&eig, &occupation, self.group_tol)?;
        let mut kernel = assemble_kernel_matrix(&grid, &self.kernel)?;
        if let Some(xc) = &self.xc {
            let rho0 = eig.ground_density(self.n_occupied);
            let fxc = alda_kernel(&grid, &rho0, |rho| xc.eval(rho))?;
            kernel = kernel.with_xc(&fxc)?;
        }
        let model = SuiteModel::new(self.name.clone(), table, kernel)?;
        Ok(BuiltModel { grid, eig, occupation, model })
    }
}

fn double_well(depth: f64, separation: f64) -> PotentialSpec {
    let well = |center| Well { charge: -depth, center, softening: 1.0 };
    PotentialSpec::SoftCoulombWells { wells: vec![well(-0.5 * separation), well(0.5 * separation)] }
}

fn suite_entry(name: &str, potential: PotentialSpec, n_occupied: usize, n_virtual: usize, kernel: InteractionKernel) -> ModelConfig {
    ModelConfig {
        name: name.into(),
        grid: GridConfig { x_min: -7.0, x_max: 7.0, n_points: 71 },
        potential,
        n_occupied,
        n_virtual,
        kernel,
        xc: None,
        group_tol: DEFAULT_GROUP_TOL,
        gap_tol: OrbitalOccupation::DEFAULT_GAP_TOL,
    }
}

/// Ten grid models: harmonic and double-well traps, `N` in {1, 2},
/// `M` from 3 to 8, soft-Coulomb and contact kernels.
pub fn bundled_suite() -> Vec<ModelConfig> {
    let harmonic = |k| PotentialSpec::Harmonic { k };
    let soft = |softening, strength| InteractionKernel::SoftCoulomb { softening, strength };
    let delta = |strength| InteractionKernel::DeltaLocal { strength };
    vec![
        suite_entry("harmonic-n1-m3-soft", harmonic(1.0), 1, 3, soft(1.0, 1.0)),
        suite_entry("harmonic-n1-m5-delta", harmonic(1.0), 1, 5, delta(0.5)),
        suite_entry("harmonic-n2-m4-soft", harmonic(1.0), 2, 4, soft(1.0, 0.5)),
        suite_entry("harmonic-n2-m8-delta", harmonic(1.0), 2, 8, delta(1.0)),
        suite_entry("harmonic-stiff-n1-m8-soft", harmonic(2.0), 1, 8, soft(1.5, 2.0)),
        suite_entry("double-well-n1-m3-delta", double_well(2.0, 3.0), 1, 3, delta(0.3)),
        suite_entry("double-well-n1-m6-soft", double_well(2.0, 3.0), 1, 6, soft(1.0, 1.0)),
        suite_entry("double-well-n2-m5-soft", double_well(2.0, 3.0), 2, 5, soft(0.7, 1.0)),
        suite_entry("double-well-n2-m7-delta", double_well(1.5, 4.0), 2, 7, delta(0.8)),
        suite_entry("double-well-n2-m3-soft", double_well(1.5, 4.0), 2, 3, soft(1.0, 0.3)),
    ]
}

/// Scales `kernel` so that the compressed pole-subtracted operator at group
/// `j` has its largest eigenvalue exactly at 1.
pub fn tune_to_coincident(table: &TransitionTable, kernel: &KernelMatrix, j: usize) -> Result<KernelMatrix> {
    let model = SymmetrizedModel::new(table, kernel, &kernel_sqrt(kernel)?)?;
    let group = model.groups.get(j).ok_or_else(|| Error::InvalidDomain(format!("no degeneracy group {j}")))?;
    let k = model.range_dim();
    let perp = DMatrix::identity(k, k) - &group.basis * group.basis.transpose();
    let (vals, vecs) = linalg::sym_eigen_sorted(&linalg::symmetrize(&perp))?;
    let keep: Vec<usize> = (0..k).filter(|&i| vals[i] > 0.5).collect();
    let w = DMatrix::from_fn(k, keep.len(), |r, c| vecs[(r, keep[c])]);
    let comp = linalg::symmetrize(&(w.transpose() * model.pole_subtracted(j) * &w));
    let (mu, _) = linalg::sym_eigen_sorted(&comp)?;
    let top = mu.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !(top > 0.0) {
        return Err(Error::InvalidDomain(format!("group {j} has no positive compressed eigenvalue to tune")));
    }
    KernelMatrix::from_matrix(&kernel.matrix / top, kernel.dx)
}

fn random_pairs(rng: &mut ChaCha8Rng, n: usize, omegas: &[f64]) -> Vec<TransitionPair> {
    omegas
        .iter()
        .enumerate()
        .map(|(p, &omega)| TransitionPair { k: 0, a: p + 1, omega, phi: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)) })
        .collect()
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    linalg::symmetrize(&(&a * a.transpose())) * scale
}

/// `P F P` with `P` the Euclidean projector off `v`, so that `F v = 0`.
fn blind_to(f: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let u = v.normalize();
    let p = DMatrix::identity(f.nrows(), f.nrows()) - &u * u.transpose();
    linalg::symmetrize(&(&p * f * &p))
}

/// Synthetic models with degenerate transitions at `omega = 1.3`, covering
/// coupled dimensions 1 and 2, uncoupled transition directions, and kernels
/// tuned so that the coincident frequency is a pole of `(1 - chi_s)^{-1}`.
pub fn coincident_models() -> Result<Vec<SuiteModel>> {
    let n = 6;
    let dx = 0.25;
    let omegas = [0.7, 1.3, 1.3, 2.0];
    let mut out = Vec::new();
    for (seed, blind, tuned) in [(11_u64, false, false), (12, true, false), (13, false, true), (14, true, true)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = random_pairs(&mut rng, n, &omegas);
        let mut f = random_psd(&mut rng, n, 0.1);
        if blind {
            let hidden = pairs.iter().filter(|p| p.omega == 1.3).nth(1).expect("two degenerate pairs").phi.clone();
            f = blind_to(&f, &hidden);
        }
        let table = TransitionTable::from_pairs(dx, n, pairs, DEFAULT_GROUP_TOL)?;
        let mut kernel = KernelMatrix::from_matrix(f, dx)?;
        let j = table.group_at(1.3).expect("degenerate group");
        if tuned {
            kernel = tune_to_coincident(&table, &kernel, j)?;
        }
        let dim = if blind { 1 } else { 2 };
        let name = format!("coincident-dim{dim}{}", if tuned { "-tuned" } else { "" });
        out.push(SuiteModel::new(name, table, kernel)?);
    }
    // Non-degenerate group with a tuned kernel.
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let pairs = random_pairs(&mut rng, n, &[0.7, 1.3, 2.0]);
    let table = TransitionTable::from_pairs(dx, n, pairs, DEFAULT_GROUP_TOL)?;
    let kernel = KernelMatrix::from_matrix(random_psd(&mut rng, n, 0.1), dx)?;
    let j = table.group_at(1.3).expect("group at 1.3");
    let kernel = tune_to_coincident(&table, &kernel, j)?;
    out.push(SuiteModel::new("coincident-simple-tuned", table, kernel)?);
    Ok(out)
}

/// One transition of weight `beta` at `omega` and a scalar kernel `g`.
pub fn scalar_toy(omega: f64, beta: f64, g: f64) -> Result<SuiteModel> {
    let p = TransitionPair { k: 0, a: 1, omega, phi: DVector::from_element(1, beta.sqrt()) };
    let table = TransitionTable::from_pairs(1.0, 1, vec![p], DEFAULT_GROUP_TOL)?;
    SuiteModel::new("scalar-toy", table, KernelMatrix::from_matrix(DMatrix::from_element(1, 1, g), 1.0)?)
}

/// `sqrt(omega^2 + 2 beta omega g)`.
pub fn scalar_toy_frequency(omega: f64, beta: f64, g: f64) -> f64 {
    (omega * omega + 2.0 * beta * omega * g).sqrt()
}
