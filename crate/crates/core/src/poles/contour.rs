//! Riesz-type contour integrals of `(1 - chi_s(z))^{-1}` around real poles.
//!
//! The integrals are computed in range coordinates; off the range of
//! `chi_s` the resolvent is the identity and contributes nothing.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SymmetrizedModel;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

pub const MIN_QUADRATURE: usize = 64;
/// Relative change allowed when the number of nodes is doubled.
pub const QUADRATURE_TOL: f64 = 1e-6;
/// Singular values of the residue above this fraction of the integrand
/// scale `radius * max ||(1 - chi_s)^{-1}||` count towards the rank.
pub const RESIDUE_RANK_TOL: f64 = 1e-6;
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContourResult {
    pub rank: usize,
    /// Spectral norm of the residue.
    pub residue_norm: f64,
    /// Pole location `z0 + tr(int (z - z0) K) / tr(int K)`; `z0` when no pole.
    pub location: f64,
    /// `|| int (z - z0) (1 - chi_s)^{-1} || / || residue ||`.
    pub simplicity: f64,
    /// `(2 pi i)^{-1} int tr((1 - chi_s)^{-1} d(1 - chi_s)/dz)`: zeros minus
    /// poles of `det(1 - chi_s)` inside the circle.
    pub winding: f64,
    /// Integrand scale used for the rank threshold.
    pub scale: f64,
    /// Residue in range coordinates.
    #[serde(skip)]
    pub residue: DMatrix<f64>,
}

impl ContourResult {
    /// `||K Q|| / ||K||` for an orthonormal block `Q` in range coordinates.
    pub fn annihilation(&self, q: &DMatrix<f64>) -> f64 {
        if self.residue_norm == 0.0 || q.ncols() == 0 {
            return 0.0;
        }
        linalg::norm2(&(&self.residue * q)) / self.residue_norm
    }
}

struct Moments {
    k: CMatrix,
    z1: CMatrix,
    winding: Complex64,
    max_inv: f64,
}

fn check_geometry(model: &SymmetrizedModel, z0: f64, radius: f64, n_quad: usize, others: &[f64]) -> Result<()> {
    if n_quad < MIN_QUADRATURE {
        return Err(Error::InvalidDomain(format!("n_quad = {n_quad} < {MIN_QUADRATURE}")));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidDomain(format!("radius {radius} must be > 0")));
    }
    let chi0_poles = model.table.groups.iter().flat_map(|g| [g.omega, -g.omega]);
    for p in chi0_poles.chain(others.iter().copied()) {
        let d = (p - z0).abs();
        if d > 1e-9 * z0.abs().max(1.0) && d < 2.0 * radius {
            return Err(Error::ContourHitsPole(p));
        }
    }
    Ok(())
}

fn integrate(z0: f64, radius: f64, n: usize, eval: &(dyn Fn(Complex64) -> Result<(CMatrix, Option<CMatrix>)> + Sync)) -> Result<Moments> {
    use rayon::prelude::*;
    let parts: Vec<(CMatrix, CMatrix, Complex64, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let e = Complex64::from_polar(1.0, theta);
            let z = z0 + e * radius;
            let (inv, deriv) = eval(z)?;
            // (2 pi i)^{-1} dz = radius e^{i theta} d theta / (2 pi)
            let w = e * radius / n as f64;
            let winding = deriv.map_or(Complex64::new(0.0, 0.0), |d| (&inv * d).trace() * w);
            let norm = linalg::norm2_c(&inv);
            Ok((&inv * w, &inv * (w * (z - z0)), winding, norm))
        })
        .collect::<Result<Vec<_>>>()?;
    let d = parts.first().map_or(0, |p| p.0.nrows());
    let mut m = Moments { k: CMatrix::zeros(d, d), z1: CMatrix::zeros(d, d), winding: Complex64::new(0.0, 0.0), max_inv: 0.0 };
    for (a, b, c, norm) in parts {
        m.k += a;
        m.z1 += b;
        m.winding += c;
        m.max_inv = m.max_inv.max(norm);
    }
    Ok(m)
}

fn checked_inverse(a: CMatrix, z: Complex64) -> Result<CMatrix> {
    if linalg::condition_number_c(&a) > MAX_CONDITION {
        return Err(Error::ContourHitsPole(z.re));
    }
    a.try_inverse().ok_or(Error::ContourHitsPole(z.re))
}

fn finish(
    z0: f64,
    radius: f64,
    n_quad: usize,
    eval: &(dyn Fn(Complex64) -> Result<(CMatrix, Option<CMatrix>)> + Sync),
) -> Result<ContourResult> {
    let coarse = integrate(z0, radius, n_quad, eval)?;
    let fine = integrate(z0, radius, 2 * n_quad, eval)?;
    let scale = radius * fine.max_inv.max(coarse.max_inv);
    if scale > 0.0 {
        let change = linalg::norm2_c(&(&fine.k - &coarse.k)) / scale;
        if change > QUADRATURE_TOL {
            return Err(Error::QuadratureNotConverged(change));
        }
    }
    // The residue of a real-symmetric family at a real pole is real symmetric.
    let residue = linalg::symmetrize(&fine.k.map(|c| c.re));
    let sv = linalg::singular_values(&residue);
    let residue_norm = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > RESIDUE_RANK_TOL * scale).count();
    let tr = fine.k.trace();
    let location = if rank > 0 && tr.norm() > 0.0 { z0 + (fine.z1.trace() / tr).re } else { z0 };
    let simplicity = if residue_norm > 0.0 { linalg::norm2_c(&fine.z1) / residue_norm } else { 0.0 };
    Ok(ContourResult { rank, residue_norm, location, simplicity, winding: fine.winding.re, scale, residue })
}

/// Contour rank of `(1 - chi_s)^{-1}` on the circle `|z - z0| = radius`.
///
/// `others` lists known poles that must stay at least `2 radius` away;
/// the poles of `chi0` are always included.
pub fn riesz_rank(model: &SymmetrizedModel, z0: f64, radius: f64, n_quad: usize, others: &[f64]) -> Result<ContourResult> {
    check_geometry(model, z0, radius, n_quad, others)?;
    let k = model.range_dim();
    let eval = |z: Complex64| -> Result<(CMatrix, Option<CMatrix>)> {
        let a = CMatrix::identity(k, k) - model.reduced(z)?;
        let inv = checked_inverse(a, z)?;
        let deriv = -model.reduced_derivative(z)?;
        Ok((inv, Some(deriv)))
    };
    finish(z0, radius, n_quad, &eval)
}

/// Contour rank of `F^{1/2} chi_rpa F^{1/2} = (1 - chi_s)^{-1} - 1`, with
/// `chi_rpa` assembled from the pair-space Dyson solution
/// `C_rpa = (1 - C G)^{-1} C` rather than from the resolvent of `chi_s`.
pub fn rpa_contour_rank(model: &SymmetrizedModel, z0: f64, radius: f64, n_quad: usize, others: &[f64]) -> Result<ContourResult> {
    check_geometry(model, z0, radius, n_quad, others)?;
    let rc = linalg::to_complex(&model.r);
    let eval = |z: Complex64| -> Result<(CMatrix, Option<CMatrix>)> {
        let c = super::rpa::chi_rpa_reduced(model, z)?;
        Ok((&rc * c * rc.transpose(), None))
    };
    finish(z0, radius, n_quad, &eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_sqrt, KernelMatrix};
    use crate::poles::tests::random_model;
    use crate::poles::{find_rpa_poles, ScanConfig};
    use crate::response::{TransitionPair, TransitionTable};
    use nalgebra::DVector;

    fn toy(omega: f64, beta: f64, g: f64) -> SymmetrizedModel {
        let p = TransitionPair { k: 0, a: 1, omega, phi: DVector::from_element(1, beta.sqrt()) };
        let t = TransitionTable::from_pairs(1.0, 1, vec![p], 1e-9).unwrap();
        let f = KernelMatrix::from_matrix(DMatrix::from_element(1, 1, g), 1.0).unwrap();
        let s = kernel_sqrt(&f).unwrap();
        SymmetrizedModel::new(&t, &f, &s).unwrap()
    }

    #[test]
    fn scalar_toy_contour() {
        let (omega, beta, g) = (1.0, 0.5, 0.8);
        let m = toy(omega, beta, g);
        let wt = (omega * omega + 2.0 * beta * omega * g).sqrt();
        let res = riesz_rank(&m, wt, 0.05, 64, &[]).unwrap();
        assert_eq!(res.rank, 1);
        assert!((res.location - wt).abs() < 1e-8);
        // 1 - mu(w) with mu = 2 w1 beta g / (w^2 - w1^2) has residue
        // (wt^2 - w1^2)^2 / (4 w1 beta g wt) at wt.
        let d = wt * wt - omega * omega;
        let want = d * d / (4.0 * omega * beta * g * wt);
        assert!((res.residue_norm - want).abs() < 1e-10 * want);
        assert!(res.simplicity < 1e-6);
        assert!((res.winding - 1.0).abs() < 1e-8);
        let shifted = rpa_contour_rank(&m, wt, 0.05, 64, &[]).unwrap();
        assert_eq!(shifted.rank, 1);
    }

    #[test]
    fn pole_free_region() {
        let m = toy(1.0, 0.5, 0.8);
        let res = riesz_rank(&m, 2.5, 0.1, 64, &[]).unwrap();
        assert_eq!(res.rank, 0);
        assert!(res.residue_norm <= 1e-8);
    }

    #[test]
    fn geometry_errors() {
        let m = toy(1.0, 0.5, 0.8);
        assert!(matches!(riesz_rank(&m, 1.2, 0.15, 64, &[]), Err(Error::ContourHitsPole(_))));
        assert!(matches!(riesz_rank(&m, 2.5, 0.1, 32, &[]), Err(Error::InvalidDomain(_))));
    }

    #[test]
    fn contour_rank_matches_bisection() {
        for seed in 0..5 {
            let (t, f, s) = random_model(6, &[0.9, 1.4, 2.2], seed);
            let m = SymmetrizedModel::new(&t, &f, &s).unwrap();
            let scan = find_rpa_poles(&m, &ScanConfig::default()).unwrap();
            assert!(scan.pathologies.is_empty(), "{:?}", scan.pathologies);
            let poles: Vec<f64> = scan.poles().iter().map(|p| p.omega).collect();
            for p in &scan.interior {
                let near = poles
                    .iter()
                    .chain(t.groups.iter().map(|g| &g.omega))
                    .filter(|&&q| (q - p.omega).abs() > 1e-9)
                    .map(|q| (q - p.omega).abs())
                    .fold(f64::INFINITY, f64::min);
                let r = (0.4 * near).min(0.05);
                let res = riesz_rank(&m, p.omega, r, 64, &poles).unwrap();
                assert_eq!(res.rank, p.rank);
            }
        }
    }
}
