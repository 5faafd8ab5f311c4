//! Laplace-Fourier transforms of sampled series and envelope growth fits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::OperatorSeries;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Required damping `Im z * T`; `exp(-23)` is about 1e-10.
pub const TAIL_DECADES: f64 = 23.0;

/// `log ||chi(t)|| ~ rate * t + intercept` fitted to block maxima.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub rate: f64,
    pub intercept: f64,
}

pub fn growth_rate(series: &OperatorSeries) -> GrowthFit {
    let len = series.time.len();
    let blocks = 10.min(len / 2).max(1);
    let size = len / blocks;
    let (mut ts, mut ls) = (Vec::new(), Vec::new());
    for b in 0..blocks {
        let lo = (b * size).max(1);
        let hi = if b + 1 == blocks { len } else { (b + 1) * size };
        let (mut best, mut at) = (0.0_f64, lo);
        for m in lo..hi {
            let v = series.mats[m].norm();
            if v > best {
                best = v;
                at = m;
            }
        }
        if best > 0.0 {
            ts.push(series.time.time(at));
            ls.push(best.ln());
        }
    }
    if ts.len() < 2 {
        return GrowthFit { rate: 0.0, intercept: ls.first().copied().unwrap_or(f64::NEG_INFINITY) };
    }
    let (rate, intercept) = linalg::linear_fit(&ts, &ls);
    GrowthFit { rate, intercept }
}

fn check_damping(series: &OperatorSeries, z: Complex64) -> Result<()> {
    let damping = z.im * series.time.horizon();
    if damping < TAIL_DECADES {
        return Err(Error::TailNotDamped(damping));
    }
    if z.im <= growth_rate(series).rate {
        return Err(Error::TailNotDamped(damping));
    }
    Ok(())
}

/// Trapezoidal `int_0^T chi(t) exp(i z t) dt` in the series' own coordinates.
pub fn fourier_transform_coeffs(series: &OperatorSeries, z: Complex64) -> Result<CMatrix> {
    series.validate()?;
    check_damping(series, z)?;
    let d = series.dim();
    let dt = series.time.dt;
    let last = series.time.n_steps;
    let mut acc = CMatrix::zeros(d, d);
    for (m, mat) in series.mats.iter().enumerate() {
        let w = if m == 0 || m == last { 0.5 * dt } else { dt };
        let e = (Complex64::i() * z * series.time.time(m)).exp() * w;
        for (a, v) in acc.iter_mut().zip(mat.iter()) {
            *a += e * v;
        }
    }
    Ok(acc)
}

/// Transform of the grid operator represented by `series`.
pub fn fourier_transform_series(series: &OperatorSeries, z: Complex64) -> Result<CMatrix> {
    let c = fourier_transform_coeffs(series, z)?;
    Ok(match &series.basis {
        Some(b) => {
            let phi = linalg::to_complex(&b.phi);
            &phi * c * phi.transpose() * Complex64::new(b.dx, 0.0)
        }
        None => c,
    })
}
