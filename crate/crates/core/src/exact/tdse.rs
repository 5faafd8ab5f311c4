//! Crank–Nicolson propagation of the perturbed two-fermion system and the
//! Kubo first-order comparison.
//!
//! Propagation runs in the eigenbasis of the retained states, where the
//! unperturbed part of the Crank–Nicolson matrix is diagonal; the perturbed
//! system is solved by a fixed-point iteration preconditioned by that diagonal.
//! When the perturbation is constant over every step the Crank–Nicolson
//! matrix is fixed and is diagonalized once instead.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{DensityCoupling, ManyBodySpectrum};
use crate::error::{Error, Result};
use crate::linalg;

/// `dt * E_max` above this is rejected.
pub const STEP_LIMIT: f64 = 0.1;
pub const NORM_DRIFT_TOL: f64 = 1e-8;
const MAX_INNER: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TimeProfile {
    Zero,
    /// 1 for `t > 0`.
    Step,
    Sine {
        frequency: f64,
    },
    /// `exp(-((t - center)/width)^2 / 2) sin(frequency t)`.
    Pulse {
        frequency: f64,
        center: f64,
        width: f64,
    },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Zero => 0.0,
            TimeProfile::Step => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            TimeProfile::Sine { frequency } => (frequency * t).sin(),
            TimeProfile::Pulse { frequency, center, width } => {
                let u = (t - center) / width;
                (-0.5 * u * u).exp() * (frequency * t).sin()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSetup {
    pub v_p: DVector<f64>,
    pub v_o: DVector<f64>,
    pub profile: TimeProfile,
    pub epsilon: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Record the observable every this many steps.
    pub record_every: usize,
}

impl PerturbationSetup {
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final >= self.dt) {
            return Err(Error::InvalidDomain(format!("need dt > 0 and T >= dt, got dt = {}, T = {}", self.dt, self.t_final)));
        }
        for (name, v) in [("v_p", &self.v_p), ("v_o", &self.v_o)] {
            if v.len() != n {
                return Err(Error::ShapeMismatch { expected: n, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        if self.record_every == 0 {
            return Err(Error::InvalidDomain("record_every must be >= 1".into()));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::NonFinite("epsilon".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdseSeries {
    pub times: Vec<f64>,
    /// `<Psi(t), V_O Psi(t)>`.
    pub values: Vec<f64>,
    pub norm_drift: f64,
}

/// `U^T diag(v(x_i) + v(x_j)) U` on the retained states.
fn project(spec: &ManyBodySpectrum, v: &DVector<f64>) -> DMatrix<f64> {
    let diag = spec.basis.one_body_diagonal(v);
    let u = &spec.states;
    let scaled = DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * diag[i]);
    linalg::symmetrize(&(u.transpose() * scaled))
}

fn apply(v: &DMatrix<f64>, x: &[Complex64]) -> Vec<Complex64> {
    let re = DVector::from_iterator(x.len(), x.iter().map(|c| c.re));
    let im = DVector::from_iterator(x.len(), x.iter().map(|c| c.im));
    let (a, b) = (v * re, v * im);
    a.iter().zip(b.iter()).map(|(&r, &i)| Complex64::new(r, i)).collect()
}

fn expectation(v: &DMatrix<f64>, x: &[Complex64]) -> f64 {
    let vx = apply(v, x);
    x.iter().zip(&vx).map(|(a, b)| (a.conj() * b).re).sum()
}

pub fn tdse_propagate(spec: &ManyBodySpectrum, setup: &PerturbationSetup) -> Result<TdseSeries> {
    setup.validate(spec.basis.n_points())?;
    let e0 = spec.ground_energy();
    let e: Vec<f64> = spec.energies.iter().map(|&x| x - e0).collect();
    let e_max = e.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let dt = setup.dt;
    if dt * e_max > STEP_LIMIT {
        return Err(Error::StepTooLarge(dt * e_max));
    }
    let vp = project(spec, &setup.v_p);
    let vo = project(spec, &setup.v_o);
    let n_steps = setup.n_steps();
    let constant = match setup.profile {
        TimeProfile::Zero => Some(0.0),
        TimeProfile::Step => Some(setup.epsilon),
        _ if setup.epsilon == 0.0 => Some(0.0),
        _ => None,
    };
    let (times, values, drift) = match constant {
        Some(amp) => propagate_constant(&e, &vp, &vo, amp, dt, n_steps, setup.record_every)?,
        None => {
            let amps: Vec<f64> = (0..n_steps).map(|m| setup.epsilon * setup.profile.eval((m as f64 + 0.5) * dt)).collect();
            propagate_iterative(&e, &vp, &vo, &amps, dt, setup.record_every)?
        }
    };
    if drift > NORM_DRIFT_TOL {
        return Err(Error::NumericalFailure(format!("norm drift {drift:e} exceeds {NORM_DRIFT_TOL:e}")));
    }
    Ok(TdseSeries { times, values, norm_drift: drift })
}

type Recorded = (Vec<f64>, Vec<f64>, f64);

/// Crank–Nicolson with `H + amp V_P` fixed: diagonal in its own eigenbasis.
fn propagate_constant(
    e: &[f64],
    vp: &DMatrix<f64>,
    vo: &DMatrix<f64>,
    amp: f64,
    dt: f64,
    n_steps: usize,
    every: usize,
) -> Result<Recorded> {
    let k = e.len();
    let h = DMatrix::from_fn(k, k, |i, j| amp * vp[(i, j)] + if i == j { e[i] } else { 0.0 });
    let (lam, w) = linalg::sym_eigen_sorted(&linalg::symmetrize(&h))?;
    let i_half = Complex64::new(0.0, 0.5 * dt);
    let ratio: Vec<Complex64> = lam.iter().map(|&l| (1.0 - i_half * l) / (1.0 + i_half * l)).collect();
    // Observable in the eigenbasis of the step matrix.
    let vo_w = linalg::symmetrize(&(w.transpose() * vo * &w));
    let mut c: Vec<Complex64> = w.row(0).iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut times = vec![0.0];
    let mut values = vec![expectation(&vo_w, &c)];
    let mut drift = 0.0_f64;
    for m in 0..n_steps {
        for (ci, r) in c.iter_mut().zip(&ratio) {
            *ci *= r;
        }
        if (m + 1) % every == 0 || m + 1 == n_steps {
            let norm = c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            drift = drift.max((norm - 1.0).abs());
            times.push((m + 1) as f64 * dt);
            values.push(expectation(&vo_w, &c));
        }
    }
    Ok((times, values, drift))
}

fn propagate_iterative(e: &[f64], vp: &DMatrix<f64>, vo: &DMatrix<f64>, amps: &[f64], dt: f64, every: usize) -> Result<Recorded> {
    let k = e.len();
    let i_half = Complex64::new(0.0, 0.5 * dt);
    let lhs: Vec<Complex64> = e.iter().map(|&x| 1.0 + i_half * x).collect();
    let rhs: Vec<Complex64> = e.iter().map(|&x| 1.0 - i_half * x).collect();
    let mut psi = vec![Complex64::new(0.0, 0.0); k];
    psi[0] = Complex64::new(1.0, 0.0);
    let n_steps = amps.len();
    let mut times = vec![0.0];
    let mut values = vec![expectation(vo, &psi)];
    let mut drift = 0.0_f64;
    for (m, &amp) in amps.iter().enumerate() {
        let mut b: Vec<Complex64> = psi.iter().zip(&rhs).map(|(p, r)| p * r).collect();
        let next = if amp == 0.0 {
            b.iter().zip(&lhs).map(|(x, l)| x / l).collect()
        } else {
            let vpsi = apply(vp, &psi);
            let c = i_half * amp;
            for (bi, v) in b.iter_mut().zip(&vpsi) {
                *bi -= c * v;
            }
            // (D + c V) x = b  by  x <- D^{-1} (b - c V x)
            let mut x = psi.clone();
            let mut converged = false;
            let mut change = f64::INFINITY;
            for _ in 0..MAX_INNER {
                let vx = apply(vp, &x);
                let new: Vec<Complex64> = (0..k).map(|i| (b[i] - c * vx[i]) / lhs[i]).collect();
                change = new.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                x = new;
                if change <= 1e-15 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NotConverged { sweeps: MAX_INNER, change });
            }
            x
        };
        psi = next;
        let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        drift = drift.max((norm - 1.0).abs());
        if (m + 1) % every == 0 || m + 1 == n_steps {
            times.push((m + 1) as f64 * dt);
            values.push(expectation(vo, &psi));
        }
    }
    Ok((times, values, drift))
}

/// `(X * f)(t_m) = int_0^t X(t - s) f(s) ds` with `X(tau) = <v_O, chi(tau) v_P>`,
/// split as `sin(w t) int cos(w s) f - cos(w t) int sin(w s) f` and integrated
/// with the midpoint rule on the propagation grid; sampled like [`tdse_propagate`].
pub fn kubo_convolution(spec: &ManyBodySpectrum, s: &DensityCoupling, setup: &PerturbationSetup) -> Result<Vec<f64>> {
    setup.validate(spec.basis.n_points())?;
    let img = s.excited_images(spec);
    let w = spec.excitations();
    let weights: Vec<f64> = (0..img.ncols())
        .map(|j| {
            let sj = img.column(j);
            (setup.v_o.dot(&sj) * s.dx) * (sj.dot(&setup.v_p) * s.dx)
        })
        .collect();
    let dt = setup.dt;
    let n_steps = setup.n_steps();
    let mut cos_acc = vec![0.0; w.len()];
    let mut sin_acc = vec![0.0; w.len()];
    let mut out = Vec::with_capacity(n_steps / setup.record_every + 2);
    out.push(0.0);
    for m in 0..n_steps {
        let sm = (m as f64 + 0.5) * dt;
        let f = setup.profile.eval(sm) * dt;
        let t = (m + 1) as f64 * dt;
        let mut total = 0.0;
        for j in 0..w.len() {
            cos_acc[j] += (w[j] * sm).cos() * f;
            sin_acc[j] += (w[j] * sm).sin() * f;
            total += -2.0 * weights[j] * ((w[j] * t).sin() * cos_acc[j] - (w[j] * t).cos() * sin_acc[j]);
        }
        if (m + 1) % setup.record_every == 0 || m + 1 == n_steps {
            out.push(total);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KuboReport {
    pub epsilons: Vec<f64>,
    /// `max_t |<V_O>_t - <V_O>_0 - eps (X * f)(t)|` per epsilon.
    pub deviations: Vec<f64>,
    /// Deviation over `max_t |eps (X * f)(t)|`.
    pub relative: Vec<f64>,
    /// Fitted exponent of deviation against epsilon; NaN unless every deviation is positive.
    pub exponent: f64,
    pub baseline: f64,
    pub max_norm_drift: f64,
}

pub fn kubo_check(spec: &ManyBodySpectrum, s: &DensityCoupling, setup: &PerturbationSetup, epsilons: &[f64]) -> Result<KuboReport> {
    let kubo = kubo_convolution(spec, s, setup)?;
    let scale = kubo.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let baseline = setup.v_o.dot(&s.ground_density(spec)) * s.dx;
    let mut deviations = Vec::with_capacity(epsilons.len());
    let mut relative = Vec::with_capacity(epsilons.len());
    let mut drift = 0.0_f64;
    for &eps in epsilons {
        let run = tdse_propagate(spec, &PerturbationSetup { epsilon: eps, ..setup.clone() })?;
        drift = drift.max(run.norm_drift);
        let d = run.values.iter().zip(&kubo).map(|(v, k)| (v - baseline - eps * k).abs()).fold(0.0, f64::max);
        deviations.push(d);
        relative.push(if eps * scale > 0.0 { d / (eps.abs() * scale) } else { 0.0 });
    }
    let exponent =
        if epsilons.len() >= 2 && deviations.iter().all(|&d| d > 0.0) { linalg::fitted_order(epsilons, &deviations) } else { f64::NAN };
    Ok(KuboReport { epsilons: epsilons.to_vec(), deviations, relative, exponent, baseline, max_norm_drift: drift })
}

/// Dominant angular frequency of a uniformly sampled signal: mean removed,
/// Hann window, zero padding and parabolic refinement of the peak bin.
pub fn spectral_peak(values: &[f64], dt: f64) -> f64 {
    use rustfft::FftPlanner;
    let n = values.len();
    if n < 4 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let len = (64 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); len];
    for (i, v) in values.iter().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
        buf[i] = Complex64::new((v - mean) * hann, 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mag: Vec<f64> = buf[..len / 2].iter().map(|c| c.norm()).collect();
    let k = (1..mag.len() - 1).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap_or(1);
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    2.0 * std::f64::consts::PI * (k as f64 + shift) / (len as f64 * dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{build_mb_hamiltonian, mb_spectrum, DEFAULT_DIM_CAP, DEFAULT_GAP_TOL};
    use crate::grid::{assemble_hamiltonian, build_grid, PotentialSpec};
    use crate::kernels::InteractionKernel;

    fn spectrum(pot: impl Fn(f64) -> f64, n: usize, half: f64) -> (ManyBodySpectrum, DensityCoupling) {
        let g = build_grid(-half, half, n).unwrap();
        let values = g.points().iter().map(|&x| pot(x)).collect();
        let h = assemble_hamiltonian(&g, &PotentialSpec::Tabulated { values }).unwrap();
        let w = InteractionKernel::SoftCoulomb { softening: 1.0, strength: 1.0 };
        let mb = build_mb_hamiltonian(&h, &w, DEFAULT_DIM_CAP).unwrap();
        let spec = mb_spectrum(&mb, mb.basis.dim(), DEFAULT_GAP_TOL).unwrap();
        let s = DensityCoupling::new(&spec);
        (spec, s)
    }

    fn setup(spec: &ManyBodySpectrum, profile: TimeProfile, eps: f64) -> PerturbationSetup {
        let x = DVector::from_vec(spec.grid.points());
        PerturbationSetup { v_p: x.clone(), v_o: x, profile, epsilon: eps, dt: 1e-3, t_final: 2.0, record_every: 1 }
    }

    #[test]
    fn unperturbed_expectation_is_constant() {
        let (spec, s) = spectrum(|x| 0.5 * x * x, 12, 4.0);
        for (profile, eps) in [(TimeProfile::Sine { frequency: 1.0 }, 0.0), (TimeProfile::Zero, 0.5)] {
            let run = tdse_propagate(&spec, &setup(&spec, profile, eps)).unwrap();
            let v0 = run.values[0];
            assert!(run.values.iter().all(|v| (v - v0).abs() < 1e-12));
            let rho = s.ground_density(&spec);
            assert!((v0 - DVector::from_vec(spec.grid.points()).dot(&rho) * s.dx).abs() < 1e-12);
        }
    }

    #[test]
    fn step_limit_enforced() {
        let (spec, _) = spectrum(|x| 0.5 * x * x, 12, 4.0);
        let mut bad = setup(&spec, TimeProfile::Step, 1e-3);
        bad.dt = 0.1;
        assert!(matches!(tdse_propagate(&spec, &bad), Err(Error::StepTooLarge(_))));
    }

    #[test]
    fn null_observable_has_no_linear_response() {
        let (spec, s) = spectrum(|x| 0.5 * x * x - 1.0 / ((x - 1.0).powi(2) + 1.0).sqrt(), 12, 4.0);
        let mut st = setup(&spec, TimeProfile::Sine { frequency: 0.8 }, 1e-2);
        st.v_o = DVector::from_element(12, 1.0);
        let k = kubo_convolution(&spec, &s, &st).unwrap();
        assert!(k.iter().all(|v| v.abs() < 1e-12));
        let r = kubo_check(&spec, &s, &st, &[1e-2]).unwrap();
        assert!(r.deviations[0] < 1e-10);
    }

    #[test]
    fn spectral_peak_of_a_tone() {
        let dt = 0.01;
        let v: Vec<f64> = (0..5000).map(|i| (1.37 * i as f64 * dt).sin() + 0.3).collect();
        assert!((spectral_peak(&v, dt) - 1.37).abs() < 1e-3);
    }
}
