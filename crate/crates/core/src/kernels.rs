//! Interaction kernels `F` on the grid and their positive square roots.
//!
//! Matrices are quadrature weighted: entry `(i, j)` is `K(x_i, x_j) * dx`,
//! so matrix products discretize operator compositions directly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::linalg;

/// Relative eigenvalue tolerance below which a kernel still counts as PSD.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InteractionKernel {
    /// `strength / sqrt((x - y)^2 + softening^2)`.
    SoftCoulomb {
        softening: f64,
        strength: f64,
    },
    /// `strength * delta(x - y)`.
    DeltaLocal {
        strength: f64,
    },
    Zero,
}

impl InteractionKernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InteractionKernel::SoftCoulomb { softening, strength } => {
                if !(softening > 0.0 && softening.is_finite()) {
                    return Err(Error::InvalidDomain(format!("kernel softening {softening} must be > 0")));
                }
                if !(strength >= 0.0 && strength.is_finite()) {
                    return Err(Error::InvalidDomain(format!("kernel strength {strength} must be >= 0")));
                }
                Ok(())
            }
            InteractionKernel::DeltaLocal { strength } if !strength.is_finite() => Err(Error::NonFinite("delta kernel strength".into())),
            _ => Ok(()),
        }
    }

    /// Pointwise value for the two-body interaction `w(x - y)`; the contact
    /// kernel has no pointwise value off the diagonal and returns zero there.
    pub fn pair_value(&self, r: f64, dx: f64) -> f64 {
        match *self {
            InteractionKernel::SoftCoulomb { softening, strength } => strength / (r * r + softening * softening).sqrt(),
            InteractionKernel::DeltaLocal { strength } => {
                if r.abs() < 0.5 * dx {
                    strength / dx
                } else {
                    0.0
                }
            }
            InteractionKernel::Zero => 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub matrix: DMatrix<f64>,
    pub dx: f64,
}

impl KernelMatrix {
    /// Wraps an explicit quadrature-weighted matrix.
    pub fn from_matrix(matrix: DMatrix<f64>, dx: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::ShapeMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel matrix".into()));
        }
        let scale = linalg::max_abs(&matrix).max(f64::MIN_POSITIVE);
        if linalg::max_abs(&(&matrix - matrix.transpose())) > 1e-12 * scale {
            return Err(Error::NumericalFailure("kernel matrix is not symmetric".into()));
        }
        Ok(Self { matrix, dx })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&v| v == 0.0)
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> Result<(f64, f64)> {
        let (vals, _) = linalg::sym_eigen_sorted(&self.matrix)?;
        if vals.is_empty() {
            return Ok((0.0, 0.0));
        }
        Ok((vals[0], vals[vals.len() - 1]))
    }

    pub fn is_psd(&self) -> Result<bool> {
        let (min, max) = self.eigen_range()?;
        Ok(min >= -PSD_TOL * max.max(0.0))
    }

    /// `F + F_xc`, the combined kernel for adiabatic local xc corrections.
    pub fn with_xc(&self, xc: &XcKernel) -> Result<Self> {
        if xc.diagonal.len() != self.dim() {
            return Err(Error::ShapeMismatch { expected: self.dim(), got: xc.diagonal.len() });
        }
        let mut m = self.matrix.clone();
        for (i, g) in xc.diagonal.iter().enumerate() {
            m[(i, i)] += g;
        }
        Ok(Self { matrix: m, dx: self.dx })
    }
}

pub fn assemble_kernel_matrix(grid: &UniformGrid, kernel: &InteractionKernel) -> Result<KernelMatrix> {
    kernel.validate()?;
    let n = grid.len();
    let dx = grid.dx();
    let matrix = match *kernel {
        InteractionKernel::Zero => DMatrix::zeros(n, n),
        InteractionKernel::DeltaLocal { strength } => DMatrix::identity(n, n) * strength,
        InteractionKernel::SoftCoulomb { softening, strength } => {
            let x = grid.points();
            DMatrix::from_fn(n, n, |i, j| {
                let r = x[i] - x[j];
                strength / (r * r + softening * softening).sqrt() * dx
            })
        }
    };
    Ok(KernelMatrix { matrix, dx })
}

#[derive(Clone, Debug)]
pub struct KernelSqrt {
    pub matrix: DMatrix<f64>,
}

pub fn kernel_sqrt(f: &KernelMatrix) -> Result<KernelSqrt> {
    Ok(KernelSqrt { matrix: linalg::psd_sqrt(&f.matrix, PSD_TOL)? })
}

/// Second density derivative of the xc energy density, as a model family
/// usable from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum XcModel {
    Constant {
        value: f64,
    },
    /// `coefficient * rho^exponent`.
    PowerLaw {
        coefficient: f64,
        exponent: f64,
    },
}

impl XcModel {
    pub fn eval(&self, rho: f64) -> f64 {
        match *self {
            XcModel::Constant { value } => value,
            XcModel::PowerLaw { coefficient, exponent } => coefficient * rho.powf(exponent),
        }
    }
}

/// Multiplicative operator `g(x_i) = e''_xc(rho0(x_i))`.
#[derive(Clone, Debug)]
pub struct XcKernel {
    pub diagonal: DVector<f64>,
}

pub fn alda_kernel(grid: &UniformGrid, rho0: &DVector<f64>, exc2: impl Fn(f64) -> f64) -> Result<XcKernel> {
    if rho0.len() != grid.len() {
        return Err(Error::ShapeMismatch { expected: grid.len(), got: rho0.len() });
    }
    if let Some(r) = rho0.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::InvalidDomain(format!("density value {r} is negative")));
    }
    let diagonal = rho0.map(exc2);
    if let Some(i) = diagonal.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("xc kernel at grid point {i}")));
    }
    Ok(XcKernel { diagonal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn grid() -> UniformGrid {
        build_grid(-5.0, 5.0, 41).unwrap()
    }

    #[test]
    fn zero_and_delta_kernels() {
        let g = grid();
        let z = assemble_kernel_matrix(&g, &InteractionKernel::Zero).unwrap();
        assert!(z.is_zero());
        let d = assemble_kernel_matrix(&g, &InteractionKernel::DeltaLocal { strength: 0.7 }).unwrap();
        assert_eq!(d.matrix, DMatrix::identity(41, 41) * 0.7);
    }

    #[test]
    fn soft_coulomb_is_psd() {
        let f = assemble_kernel_matrix(&grid(), &InteractionKernel::SoftCoulomb { softening: 1.0, strength: 1.0 }).unwrap();
        let (min, max) = f.eigen_range().unwrap();
        assert!(min >= -1e-10 * max, "min {min} max {max}");
    }

    #[test]
    fn sqrt_examples() {
        let four = KernelMatrix::from_matrix(DMatrix::identity(3, 3) * 4.0, 1.0).unwrap();
        let s = kernel_sqrt(&four).unwrap();
        assert!(linalg::max_abs(&(s.matrix - DMatrix::identity(3, 3) * 2.0)) < 1e-14);

        let proj = KernelMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])), 1.0).unwrap();
        let s = kernel_sqrt(&proj).unwrap();
        assert!(linalg::max_abs(&(s.matrix - &proj.matrix)) < 1e-14);
    }

    #[test]
    fn soft_coulomb_sqrt_reconstructs() {
        let f = assemble_kernel_matrix(&grid(), &InteractionKernel::SoftCoulomb { softening: 1.0, strength: 1.0 }).unwrap();
        let s = kernel_sqrt(&f).unwrap();
        let err = linalg::max_abs(&(&s.matrix * &s.matrix - &f.matrix));
        assert!(err <= 1e-9 * linalg::max_abs(&f.matrix));
    }

    #[test]
    fn reflection_symmetry() {
        let f = assemble_kernel_matrix(&grid(), &InteractionKernel::SoftCoulomb { softening: 0.5, strength: 2.0 }).unwrap();
        let n = f.dim();
        let r = DMatrix::from_fn(n, n, |i, j| if i + j == n - 1 { 1.0 } else { 0.0 });
        assert!(linalg::max_abs(&(&r * &f.matrix * &r - &f.matrix)) <= 1e-12);
    }

    #[test]
    fn alda_examples() {
        let g = grid();
        let rho = g.sample(|x| (-x * x).exp());
        let zero = alda_kernel(&g, &rho, |_| 0.0).unwrap();
        assert!(zero.diagonal.iter().all(|&v| v == 0.0));
        let c = alda_kernel(&g, &rho, |_| 0.3).unwrap();
        assert!(c.diagonal.iter().all(|&v| v == 0.3));
        let lda = alda_kernel(&g, &rho, |r| -r.cbrt()).unwrap();
        for i in 0..g.len() {
            assert_eq!(lda.diagonal[i], -rho[i].cbrt());
        }
        let bad = alda_kernel(&g, &rho, |r| 1.0 / (r - rho[0]));
        assert!(matches!(bad, Err(Error::NonFinite(_))));
    }

    #[test]
    fn negative_xc_breaks_psd() {
        let g = grid();
        let f = assemble_kernel_matrix(&g, &InteractionKernel::DeltaLocal { strength: 0.1 }).unwrap();
        let xc = XcKernel { diagonal: DVector::from_element(g.len(), -1.0) };
        let combined = f.with_xc(&xc).unwrap();
        assert!(!combined.is_psd().unwrap());
        assert!(matches!(kernel_sqrt(&combined), Err(Error::NotPsd { .. })));
        let pos = XcKernel { diagonal: DVector::from_element(g.len(), 0.5) };
        assert!(kernel_sqrt(&f.with_xc(&pos).unwrap()).is_ok());
    }
}
