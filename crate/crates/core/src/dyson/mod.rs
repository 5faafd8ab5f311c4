//! Time-domain RPA Dyson equation `chi = chi0 + chi0 * F chi` (convolution
//! in time), solved as a Volterra equation of the second kind.
//!
//! Series are sampled at `t_m = m dt`, `m = 0..=n_steps`. The reduced
//! representation stores `P x P` coefficients `C_m` with
//! `chi(t_m) = Phi C_m Phi^T dx`; there the kernel becomes
//! `G = dx Phi^T F Phi` and the equation closes as `C = D + D * G C`.

mod fourier;
mod io;
mod solve;

pub use fourier::{fourier_transform_coeffs, fourier_transform_series, growth_rate, GrowthFit, TAIL_DECADES};
pub use io::{read_series, write_series, SeriesMeta};
pub use solve::{dyson_residual, dyson_solve_march, dyson_solve_picard, inverse_map, PicardReport, VolterraConfig, VolterraMethod};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::response::TransitionTable;

/// Largest admissible `dt * omega_max`.
pub const RESOLUTION_LIMIT: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidDomain(format!("dt = {dt} must be > 0")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidDomain("n_steps must be >= 1".into()));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid reaching at least `horizon`.
    pub fn covering(dt: f64, horizon: f64) -> Result<Self> {
        Self::new(dt, (horizon / dt - 1e-9).ceil().max(1.0) as usize)
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn check_resolution(&self, omega_max: f64) -> Result<()> {
        let r = self.dt * omega_max;
        if r > RESOLUTION_LIMIT {
            return Err(Error::UnresolvedTimeGrid(r));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Full,
    Reduced,
}

/// Transition densities spanning a reduced series.
#[derive(Clone, Debug)]
pub struct ReducedBasis {
    pub phi: DMatrix<f64>,
    pub dx: f64,
}

impl ReducedBasis {
    pub fn from_table(table: &TransitionTable) -> Self {
        Self { phi: table.phi.clone(), dx: table.dx }
    }

    pub fn expand(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        &self.phi * c * self.phi.transpose() * self.dx
    }

    /// `G = dx Phi^T F Phi`.
    pub fn reduce_kernel(&self, f: &KernelMatrix) -> Result<DMatrix<f64>> {
        if f.dim() != self.phi.nrows() {
            return Err(Error::ShapeMismatch { expected: self.phi.nrows(), got: f.dim() });
        }
        Ok(crate::linalg::symmetrize(&(self.phi.transpose() * &f.matrix * &self.phi * self.dx)))
    }
}

/// Time-sampled operator-valued function.
#[derive(Clone, Debug)]
pub struct OperatorSeries {
    pub time: TimeGrid,
    pub mats: Vec<DMatrix<f64>>,
    /// Present for the reduced representation.
    pub basis: Option<ReducedBasis>,
    /// Frequencies `w_p` when the series is exactly `diag(-2 sin(w_p t))` in
    /// reduced coordinates; enables the O(P^2) per-step convolution.
    pub modes: Option<Vec<f64>>,
}

impl OperatorSeries {
    pub fn new(time: TimeGrid, mats: Vec<DMatrix<f64>>, basis: Option<ReducedBasis>) -> Result<Self> {
        let s = Self { time, mats, basis, modes: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mats.len() != self.time.len() {
            return Err(Error::InconsistentSeries(format!("{} samples for {} time points", self.mats.len(), self.time.len())));
        }
        let d = self.dim();
        if self.mats.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::InconsistentSeries("samples have differing shapes".into()));
        }
        if let Some(b) = &self.basis {
            if b.phi.ncols() != d {
                return Err(Error::ShapeMismatch { expected: b.phi.ncols(), got: d });
            }
        }
        if self.mats.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("series sample".into()));
        }
        Ok(())
    }

    pub fn representation(&self) -> Representation {
        if self.basis.is_some() {
            Representation::Reduced
        } else {
            Representation::Full
        }
    }

    /// Matrix size per sample (`n` or `P`).
    pub fn dim(&self) -> usize {
        self.mats.first().map_or(0, |m| m.nrows())
    }

    /// Grid dimension of the operator the series represents.
    pub fn grid_dim(&self) -> usize {
        self.basis.as_ref().map_or(self.dim(), |b| b.phi.nrows())
    }

    pub fn zeros_like(&self) -> Self {
        let d = self.dim();
        Self { time: self.time, mats: vec![DMatrix::zeros(d, d); self.time.len()], basis: self.basis.clone(), modes: None }
    }

    /// Operator at step `m` on the grid.
    pub fn full_at(&self, m: usize) -> DMatrix<f64> {
        match &self.basis {
            Some(b) => b.expand(&self.mats[m]),
            None => self.mats[m].clone(),
        }
    }

    pub fn to_full(&self) -> Self {
        let mats = (0..self.time.len()).map(|m| self.full_at(m)).collect();
        Self { time: self.time, mats, basis: None, modes: None }
    }

    /// Coupling matrix acting in this series' coordinates.
    pub fn coupling(&self, f: &KernelMatrix) -> Result<DMatrix<f64>> {
        match &self.basis {
            Some(b) => b.reduce_kernel(f),
            None => {
                if f.dim() != self.dim() {
                    return Err(Error::ShapeMismatch { expected: self.dim(), got: f.dim() });
                }
                Ok(f.matrix.clone())
            }
        }
    }

    /// `max_m max_ij |A_m - B_m|` in the common representation.
    pub fn max_diff(&self, other: &Self) -> Result<f64> {
        if self.time != other.time {
            return Err(Error::InconsistentSeries("time grids differ".into()));
        }
        let same = self.representation() == other.representation() && self.dim() == other.dim();
        let mut worst = 0.0_f64;
        for m in 0..self.time.len() {
            let d = if same { &self.mats[m] - &other.mats[m] } else { self.full_at(m) - other.full_at(m) };
            worst = worst.max(crate::linalg::max_abs(&d));
        }
        Ok(worst)
    }
}

/// Reduced coupling of a transition table.
#[derive(Clone, Debug)]
pub struct ReducedCoupling {
    pub g: DMatrix<f64>,
    pub basis: ReducedBasis,
}

pub fn reduce_to_transition_space(table: &TransitionTable, f: &KernelMatrix) -> Result<ReducedCoupling> {
    if table.is_empty() {
        return Err(Error::EmptyModel("transition table has no pairs".into()));
    }
    let basis = ReducedBasis::from_table(table);
    let g = basis.reduce_kernel(f)?;
    Ok(ReducedCoupling { g, basis })
}

/// `D_m = diag(-2 sin(w_p t_m))` in reduced coordinates.
pub fn chi0_series_reduced(table: &TransitionTable, time: TimeGrid) -> Result<OperatorSeries> {
    if table.is_empty() {
        return Err(Error::EmptyModel("transition table has no pairs".into()));
    }
    time.check_resolution(table.max_omega())?;
    let omegas = table.omegas();
    let mats = (0..time.len())
        .map(|m| {
            let t = time.time(m);
            DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(omegas.len(), omegas.iter().map(|w| -2.0 * (w * t).sin())))
        })
        .collect();
    Ok(OperatorSeries { time, mats, basis: Some(ReducedBasis::from_table(table)), modes: Some(omegas) })
}

pub fn chi0_series_full(table: &TransitionTable, time: TimeGrid) -> Result<OperatorSeries> {
    Ok(chi0_series_reduced(table, time)?.to_full())
}
