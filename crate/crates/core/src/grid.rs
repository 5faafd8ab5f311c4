//! Uniform 1D grids, finite-difference one-body Hamiltonians and their spectra.
//!
//! Grid functions live in `R^n` with the quadrature inner product
//! `<f, g> = dx * sum_i f_i g_i`. Eigenvectors returned by [`diagonalize`]
//! are orthonormal in that inner product.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Points `x_min, x_min + dx, ..., x_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl UniformGrid {
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Grid function sampled from `f`.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.n_points, self.points().into_iter().map(f))
    }

    /// Quadrature inner product.
    pub fn inner(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        self.dx() * f.dot(g)
    }
}

pub fn build_grid(x_min: f64, x_max: f64, n_points: usize) -> Result<UniformGrid> {
    if n_points < 2 {
        return Err(Error::InvalidDomain(format!("n_points = {n_points} < 2")));
    }
    if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
        return Err(Error::InvalidDomain(format!("x_min = {x_min} must be below x_max = {x_max}")));
    }
    Ok(UniformGrid { x_min, x_max, n_points })
}

/// One attractive (negative charge) or repulsive soft-Coulomb centre,
/// contributing `charge / sqrt((x - center)^2 + softening^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub charge: f64,
    pub center: f64,
    pub softening: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `k x^2 / 2`.
    Harmonic {
        k: f64,
    },
    SoftCoulombWells {
        wells: Vec<Well>,
    },
    Tabulated {
        values: Vec<f64>,
    },
}

impl PotentialSpec {
    pub fn validate(&self, grid: &UniformGrid) -> Result<()> {
        match self {
            PotentialSpec::Harmonic { k } if !(*k > 0.0 && k.is_finite()) => {
                Err(Error::InvalidDomain(format!("harmonic curvature k = {k} must be > 0")))
            }
            PotentialSpec::SoftCoulombWells { wells } => {
                for w in wells {
                    if !(w.softening > 0.0) {
                        return Err(Error::InvalidDomain(format!("well softening {} must be > 0", w.softening)));
                    }
                    if !(w.charge.is_finite() && w.center.is_finite()) {
                        return Err(Error::NonFinite("well parameters".into()));
                    }
                }
                Ok(())
            }
            PotentialSpec::Tabulated { values } if values.len() != grid.len() => {
                Err(Error::ShapeMismatch { expected: grid.len(), got: values.len() })
            }
            PotentialSpec::Tabulated { values } if values.iter().any(|v| !v.is_finite()) => {
                Err(Error::NonFinite("tabulated potential".into()))
            }
            _ => Ok(()),
        }
    }

    /// Potential values on the grid.
    pub fn evaluate(&self, grid: &UniformGrid) -> Result<DVector<f64>> {
        self.validate(grid)?;
        Ok(match self {
            PotentialSpec::Harmonic { k } => grid.sample(|x| 0.5 * k * x * x),
            PotentialSpec::SoftCoulombWells { wells } => {
                grid.sample(|x| wells.iter().map(|w| w.charge / ((x - w.center).powi(2) + w.softening.powi(2)).sqrt()).sum())
            }
            PotentialSpec::Tabulated { values } => DVector::from_column_slice(values),
        })
    }
}

/// `h = -1/2 Laplacian + v` with the 3-point stencil and Dirichlet walls.
#[derive(Clone, Debug)]
pub struct OneBodyHamiltonian {
    pub matrix: DMatrix<f64>,
    pub grid: UniformGrid,
}

pub fn assemble_hamiltonian(grid: &UniformGrid, pot: &PotentialSpec) -> Result<OneBodyHamiltonian> {
    let v = pot.evaluate(grid)?;
    let n = grid.len();
    let dx = grid.dx();
    let diag = 1.0 / (dx * dx);
    let off = -0.5 / (dx * dx);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag + v[i];
        if i + 1 < n {
            m[(i, i + 1)] = off;
            m[(i + 1, i)] = off;
        }
    }
    Ok(OneBodyHamiltonian { matrix: m, grid: grid.clone() })
}

/// Full spectrum of a one-body Hamiltonian.
#[derive(Clone, Debug)]
pub struct EigenSolution {
    /// Ascending.
    pub eigenvalues: DVector<f64>,
    /// Columns orthonormal under the `dx`-weighted inner product.
    pub eigenvectors: DMatrix<f64>,
    pub grid: UniformGrid,
}

impl EigenSolution {
    pub fn orbital(&self, k: usize) -> DVector<f64> {
        self.eigenvectors.column(k).into_owned()
    }

    /// `max |Psi^T W Psi - I|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let gram = self.eigenvectors.transpose() * &self.eigenvectors * self.grid.dx();
        let n = gram.nrows();
        linalg::max_abs(&(gram - DMatrix::identity(n, n)))
    }

    /// Largest magnitude of the first `n_occupied` orbitals at either wall.
    pub fn wall_amplitude(&self, n_occupied: usize) -> f64 {
        let last = self.grid.len() - 1;
        (0..n_occupied.min(self.eigenvalues.len()))
            .map(|k| self.eigenvectors[(0, k)].abs().max(self.eigenvectors[(last, k)].abs()))
            .fold(0.0, f64::max)
    }

    /// Emits a warning when occupied orbitals have not decayed below 1e-8 at the walls.
    pub fn check_decay(&self, n_occupied: usize) -> bool {
        let amp = self.wall_amplitude(n_occupied);
        if amp > 1e-8 {
            warn!("occupied orbitals reach {amp:.3e} at the box walls; enlarge the domain");
            false
        } else {
            true
        }
    }

    /// Ground density of spinless fermions occupying the lowest `n_occupied` orbitals.
    pub fn ground_density(&self, n_occupied: usize) -> DVector<f64> {
        let n = self.grid.len();
        DVector::from_fn(n, |i, _| (0..n_occupied).map(|k| self.eigenvectors[(i, k)].powi(2)).sum())
    }
}

pub fn diagonalize(h: &OneBodyHamiltonian) -> Result<EigenSolution> {
    let m = &h.matrix;
    let scale = linalg::max_abs(m).max(1.0);
    if linalg::max_abs(&(m - m.transpose())) > 1e-12 * scale {
        return Err(Error::NumericalFailure("one-body Hamiltonian is not symmetric".into()));
    }
    let (vals, vecs) = linalg::sym_eigen_sorted(m)?;
    let scale = 1.0 / h.grid.dx().sqrt();
    Ok(EigenSolution { eigenvalues: vals, eigenvectors: vecs * scale, grid: h.grid.clone() })
}

/// N occupied orbitals and M retained virtual orbitals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitalOccupation {
    pub n_occupied: usize,
    pub n_virtual: usize,
}

impl OrbitalOccupation {
    pub const DEFAULT_GAP_TOL: f64 = 1e-8;

    pub fn new(n_occupied: usize, n_virtual: usize) -> Self {
        Self { n_occupied, n_virtual }
    }

    pub fn validate(&self, eig: &EigenSolution, gap_tol: f64) -> Result<()> {
        let n = eig.eigenvalues.len();
        if self.n_occupied < 1 {
            return Err(Error::InvalidDomain("at least one occupied orbital is required".into()));
        }
        if self.n_occupied + self.n_virtual > n {
            return Err(Error::InvalidDomain(format!("N + M = {} exceeds the {n} grid points", self.n_occupied + self.n_virtual)));
        }
        if self.n_occupied < n {
            let homo = eig.eigenvalues[self.n_occupied - 1];
            let lumo = eig.eigenvalues[self.n_occupied];
            if lumo - homo <= gap_tol {
                return Err(Error::DegenerateFermiLevel { homo, lumo });
            }
        }
        Ok(())
    }
}
