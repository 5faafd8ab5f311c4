//! Trapezoidal Volterra solvers, the residual and the inverse solution map.
//!
//! With `X` the reference series and `K` the coupling in the same
//! coordinates, the discrete equation at step `m >= 1` is
//! `Y_m = X_m + dt * sum''_{l=0..m} X_{m-l} K Y_l` (endpoint weights 1/2)
//! and `Y_0 = X_0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::OperatorSeries;
use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::linalg;

/// Largest admissible condition number of the implicit step factor.
pub const MAX_STEP_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolterraMethod {
    March,
    Picard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolterraConfig {
    pub method: VolterraMethod,
    /// Requested Picard window length in time units; shrunk as needed.
    pub window: Option<f64>,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Target contraction factor of one window.
    pub contraction: f64,
}

impl Default for VolterraConfig {
    fn default() -> Self {
        Self { method: VolterraMethod::March, window: None, tol: 1e-12, max_sweeps: 200, contraction: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    pub window_steps: usize,
    pub n_windows: usize,
    pub max_sweeps: usize,
    pub total_sweeps: usize,
}

/// Sine/cosine history sums for a reference series `diag(-2 sin(w_p t))`.
///
/// For such a series the history sum `sum_l w_l X_{m-l} Z_l` only needs the
/// weighted moments `sum_l w_l cos(w_p t_l) Z_l[p, :]` and the matching sine
/// moments, since `sin(w (t_m - t_l))` splits into products.
#[derive(Clone)]
struct Moments {
    cos: DMatrix<f64>,
    sin: DMatrix<f64>,
}

impl Moments {
    fn new(p: usize) -> Self {
        Self { cos: DMatrix::zeros(p, p), sin: DMatrix::zeros(p, p) }
    }

    fn add(&mut self, omegas: &[f64], t: f64, weight: f64, z: &DMatrix<f64>) {
        for (p, w) in omegas.iter().enumerate() {
            let (s, c) = (w * t).sin_cos();
            for q in 0..z.ncols() {
                self.cos[(p, q)] += weight * c * z[(p, q)];
                self.sin[(p, q)] += weight * s * z[(p, q)];
            }
        }
    }

    /// `sum_l w_l (-2 sin(w_p (t - t_l))) Z_l[p, :]`.
    fn history(&self, omegas: &[f64], t: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.cos.nrows(), self.cos.ncols());
        for (p, w) in omegas.iter().enumerate() {
            let (s, c) = (w * t).sin_cos();
            for q in 0..out.ncols() {
                out[(p, q)] = -2.0 * (s * self.cos[(p, q)] - c * self.sin[(p, q)]);
            }
        }
        out
    }
}

/// Trapezoid weight of history sample `l` strictly before the current step.
fn history_weight(l: usize) -> f64 {
    if l == 0 {
        0.5
    } else {
        1.0
    }
}

fn trap_weight(l: usize, m: usize) -> f64 {
    if l == 0 || l == m {
        0.5
    } else {
        1.0
    }
}

/// Checked inverse of the implicit factor `I - (dt/2) X_0 K`.
fn implicit_factor(x0: &DMatrix<f64>, k: &DMatrix<f64>, dt: f64) -> Result<Option<DMatrix<f64>>> {
    if x0.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    let d = x0.nrows();
    let a = DMatrix::identity(d, d) - x0 * k * (0.5 * dt);
    let cond = linalg::condition_number(&a);
    if !(cond <= MAX_STEP_CONDITION) {
        return Err(Error::IllConditionedStep(cond));
    }
    a.try_inverse().map(Some).ok_or(Error::IllConditionedStep(f64::INFINITY))
}

fn check_pair(chi0: &OperatorSeries, chi: &OperatorSeries) -> Result<()> {
    if chi0.time != chi.time || chi0.dim() != chi.dim() || chi0.representation() != chi.representation() {
        return Err(Error::InconsistentSeries("series do not share grid and representation".into()));
    }
    Ok(())
}

pub fn dyson_solve_march(chi0: &OperatorSeries, f: &KernelMatrix) -> Result<OperatorSeries> {
    chi0.validate()?;
    let k = chi0.coupling(f)?;
    let dt = chi0.time.dt;
    let len = chi0.time.len();
    let x = &chi0.mats;
    let mut y: Vec<DMatrix<f64>> = Vec::with_capacity(len);
    let mut z: Vec<DMatrix<f64>> = Vec::with_capacity(len);
    y.push(x[0].clone());
    z.push(&k * &x[0]);

    match &chi0.modes {
        Some(omegas) => {
            let mut mom = Moments::new(chi0.dim());
            for m in 1..len {
                mom.add(omegas, chi0.time.time(m - 1), history_weight(m - 1), &z[m - 1]);
                let ym = &x[m] + mom.history(omegas, chi0.time.time(m)) * dt;
                z.push(&k * &ym);
                y.push(ym);
            }
        }
        None => {
            let inv = implicit_factor(&x[0], &k, dt)?;
            for m in 1..len {
                let mut rhs = &x[m] * &z[0] * 0.5;
                for l in 1..m {
                    rhs += &x[m - l] * &z[l];
                }
                let rhs = &x[m] + rhs * dt;
                let ym = match &inv {
                    Some(a) => a * rhs,
                    None => rhs,
                };
                z.push(&k * &ym);
                y.push(ym);
            }
        }
    }
    Ok(OperatorSeries { time: chi0.time, mats: y, basis: chi0.basis.clone(), modes: None })
}

/// Window length in steps that keeps one Jacobi sweep a contraction.
fn picard_window(chi0: &OperatorSeries, k: &DMatrix<f64>, cfg: &VolterraConfig) -> Result<usize> {
    let dt = chi0.time.dt;
    let x_norm = chi0.mats.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let k_norm = linalg::norm2(k);
    let product = x_norm * k_norm;
    let mut steps = chi0.time.n_steps;
    if let Some(w) = cfg.window {
        steps = steps.min((w / dt).floor() as usize);
    }
    if product > 0.0 {
        let needed = cfg.contraction / product;
        let fit = (needed / dt).floor() - 1.0;
        if fit < 1.0 {
            return Err(Error::NoContraction { needed, floor: dt });
        }
        steps = steps.min(fit as usize);
    }
    if steps == 0 {
        return Err(Error::NoContraction { needed: cfg.window.unwrap_or(0.0), floor: dt });
    }
    Ok(steps)
}

pub fn dyson_solve_picard(chi0: &OperatorSeries, f: &KernelMatrix, cfg: &VolterraConfig) -> Result<(OperatorSeries, PicardReport)> {
    chi0.validate()?;
    let k = chi0.coupling(f)?;
    let dt = chi0.time.dt;
    let len = chi0.time.len();
    let x = &chi0.mats;
    let w = picard_window(chi0, &k, cfg)?;

    let mut y: Vec<DMatrix<f64>> = x.clone();
    let mut z: Vec<DMatrix<f64>> = y.iter().map(|m| &k * m).collect();
    let mut mom = chi0.modes.as_ref().map(|_| Moments::new(chi0.dim()));
    let mut report = PicardReport { window_steps: w, n_windows: 0, max_sweeps: 0, total_sweeps: 0 };

    // Step 0 is fixed by the equation; windows cover steps 1..len.
    let mut start = 1;
    while start < len {
        let end = (start + w).min(len);
        report.n_windows += 1;
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let mut new_vals = Vec::with_capacity(end - start);
            match (&chi0.modes, &mom) {
                (Some(omegas), Some(hist)) => {
                    let mut run = hist.clone();
                    for m in start..end {
                        run.add(omegas, chi0.time.time(m - 1), history_weight(m - 1), &z[m - 1]);
                        new_vals.push(&x[m] + run.history(omegas, chi0.time.time(m)) * dt);
                    }
                }
                _ => {
                    for m in start..end {
                        let mut acc = DMatrix::zeros(chi0.dim(), chi0.dim());
                        for l in 0..=m {
                            acc += &x[m - l] * &z[l] * trap_weight(l, m);
                        }
                        new_vals.push(&x[m] + acc * dt);
                    }
                }
            }
            let mut change = 0.0_f64;
            let mut scale = 1.0_f64;
            for (off, v) in new_vals.into_iter().enumerate() {
                let m = start + off;
                change = change.max(linalg::max_abs(&(&v - &y[m])));
                scale = scale.max(linalg::max_abs(&v));
                z[m] = &k * &v;
                y[m] = v;
            }
            if change <= cfg.tol * scale {
                break;
            }
            if sweeps >= cfg.max_sweeps {
                return Err(Error::NotConverged { sweeps, change });
            }
        }
        if let (Some(omegas), Some(hist)) = (&chi0.modes, mom.as_mut()) {
            for m in start..end {
                hist.add(omegas, chi0.time.time(m - 1), history_weight(m - 1), &z[m - 1]);
            }
        }
        report.max_sweeps = report.max_sweeps.max(sweeps);
        report.total_sweeps += sweeps;
        start = end;
    }
    Ok((OperatorSeries { time: chi0.time, mats: y, basis: chi0.basis.clone(), modes: None }, report))
}

/// `max_m || chi_m - chi0_m - (chi0 * F chi)_m ||_max` in the series' coordinates.
pub fn dyson_residual(chi0: &OperatorSeries, chi: &OperatorSeries, f: &KernelMatrix) -> Result<f64> {
    check_pair(chi0, chi)?;
    let k = chi0.coupling(f)?;
    let dt = chi0.time.dt;
    let z: Vec<DMatrix<f64>> = chi.mats.iter().map(|m| &k * m).collect();
    let mut worst = linalg::max_abs(&(&chi.mats[0] - &chi0.mats[0]));
    for m in 1..chi0.time.len() {
        let mut acc = DMatrix::zeros(chi0.dim(), chi0.dim());
        for (l, zl) in z.iter().enumerate().take(m + 1) {
            acc += &chi0.mats[m - l] * zl * trap_weight(l, m);
        }
        let r = &chi.mats[m] - &chi0.mats[m] - acc * dt;
        worst = worst.max(linalg::max_abs(&r));
    }
    Ok(worst)
}

/// Recovers `chi0` from `chi` by solving `chi0 = chi - chi0 * F chi` step by step.
pub fn inverse_map(chi: &OperatorSeries, f: &KernelMatrix) -> Result<OperatorSeries> {
    chi.validate()?;
    let k = chi.coupling(f)?;
    let dt = chi.time.dt;
    let len = chi.time.len();
    let d = chi.dim();
    let z: Vec<DMatrix<f64>> = chi.mats.iter().map(|m| &k * m).collect();
    // X_m (I + (dt/2) Z_0) = Y_m - dt (X_0 Z_m / 2 + sum_{l=1}^{m-1} X_{m-l} Z_l)
    let right = if z[0].iter().all(|&v| v == 0.0) {
        None
    } else {
        let a = DMatrix::identity(d, d) + &z[0] * (0.5 * dt);
        let cond = linalg::condition_number(&a);
        if !(cond <= MAX_STEP_CONDITION) {
            return Err(Error::IllConditionedStep(cond));
        }
        Some(a.try_inverse().ok_or(Error::IllConditionedStep(f64::INFINITY))?)
    };
    let mut x: Vec<DMatrix<f64>> = Vec::with_capacity(len);
    x.push(chi.mats[0].clone());
    for m in 1..len {
        let mut acc = &x[0] * &z[m] * 0.5;
        for l in 1..m {
            acc += &x[m - l] * &z[l];
        }
        let rhs = &chi.mats[m] - acc * dt;
        x.push(match &right {
            Some(a) => rhs * a,
            None => rhs,
        });
    }
    Ok(OperatorSeries { time: chi.time, mats: x, basis: chi.basis.clone(), modes: None })
}
