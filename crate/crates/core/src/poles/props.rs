//! Structural checks of `chi_s`: real/imaginary ratio bound, resolvent
//! blow-up off the real axis, negativity below the first pole, monotone
//! eigencurves, coincident-pole annihilation and counting bookkeeping.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::contour::riesz_rank;
use super::scan::{eig_curves, find_rpa_poles, BookkeepingRecord, ScanConfig};
use super::{rpa_contour_rank, SymmetrizedModel};
use crate::error::Result;
use crate::linalg::{self, CMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertyConfig {
    pub seed: u64,
    pub n_vectors: usize,
    pub n_points: usize,
    pub ratio_slack: f64,
    /// Decreasing sequence of imaginary parts, each half the previous.
    pub etas: Vec<f64>,
    pub blowup_factor: f64,
    pub n_blowup_samples: usize,
    pub nsd_tol: f64,
    pub n_nsd_samples: usize,
    pub n_curve_samples: usize,
    pub annihilation_tol: f64,
    pub n_quad: usize,
    pub max_radius: f64,
    pub scan: ScanConfig,
}

impl Default for PropertyConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_vectors: 100,
            n_points: 50,
            ratio_slack: 1e-10,
            etas: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3],
            blowup_factor: 2.0,
            n_blowup_samples: 200,
            nsd_tol: 1e-10,
            n_nsd_samples: 50,
            n_curve_samples: 200,
            annihilation_tol: 1e-8,
            n_quad: 128,
            max_radius: 0.05,
            scan: ScanConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioCheck {
    pub n_evaluations: usize,
    /// Largest `Re q - bound |Im q|` seen.
    pub worst_excess: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupCheck {
    pub etas: Vec<f64>,
    /// `max_omega ||(1 - chi_s(omega + i eta))^{-1}|| eta / |z|` per eta.
    pub constants: Vec<f64>,
    pub worst_ratio: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsdCheck {
    pub omega_1: f64,
    pub max_eigenvalue: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCheck {
    pub intervals: Vec<(f64, f64)>,
    pub worst_increase: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnihilationRecord {
    pub group: usize,
    pub omega: f64,
    pub dim: usize,
    pub contour_rank: usize,
    pub residue_norm: f64,
    /// `||K Q_j|| / ||K||`, 0 when the residue vanishes.
    pub relative: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankIdentityRecord {
    pub omega: f64,
    pub coincident: bool,
    /// Eigenvalue-1 multiplicity (interior) or projected multiplicity (coincident).
    pub multiplicity: usize,
    pub resolvent_contour_rank: usize,
    pub rpa_contour_rank: usize,
    pub simplicity: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub ratio: RatioCheck,
    pub blowup: BlowupCheck,
    pub nsd: NsdCheck,
    pub monotone: MonotoneCheck,
    pub annihilation: Vec<AnnihilationRecord>,
    pub bookkeeping: Vec<BookkeepingRecord>,
    pub rank_identity: Vec<RankIdentityRecord>,
    pub pathologies: Vec<String>,
}

impl PropertyReport {
    pub fn annihilation_passed(&self) -> bool {
        self.annihilation.iter().all(|a| a.passed)
    }

    pub fn bookkeeping_passed(&self) -> bool {
        self.bookkeeping.iter().all(|b| b.holds)
    }

    pub fn rank_identity_passed(&self) -> bool {
        self.rank_identity.iter().all(|r| r.passed)
    }

    pub fn passed(&self) -> bool {
        self.ratio.passed
            && self.blowup.passed
            && self.nsd.passed
            && self.monotone.passed
            && self.annihilation_passed()
            && self.bookkeeping_passed()
            && self.rank_identity_passed()
    }
}

fn random_unit(rng: &mut ChaCha8Rng, k: usize) -> DVector<Complex64> {
    let v = DVector::from_fn(k, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let n = v.norm();
    if n > 0.0 {
        v / Complex64::new(n, 0.0)
    } else {
        v
    }
}

/// `max{0, (w^2 - eta^2 - w1^2) / |w eta|}`.
fn ratio_bound(z: Complex64, w1: f64) -> f64 {
    let num = z.re * z.re - z.im * z.im - w1 * w1;
    if num <= 0.0 {
        0.0
    } else {
        num / (z.re * z.im).abs()
    }
}

fn check_ratio(model: &SymmetrizedModel, cfg: &PropertyConfig, rng: &mut ChaCha8Rng) -> Result<RatioCheck> {
    let k = model.range_dim();
    let w1 = model.lowest_pole();
    let top = model.table.max_omega() * 1.5;
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for s in 0..cfg.n_points {
        // One tenth purely imaginary, one tenth real below the first pole.
        let z = match s % 10 {
            0 => Complex64::new(0.0, rng.random_range(1e-3..1.0) * top),
            1 if w1.is_finite() => Complex64::new(rng.random_range(-1.0..1.0) * w1 * 0.999, 0.0),
            _ => {
                let eta = 10f64.powf(rng.random_range(-3.0..0.0)) * top;
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                Complex64::new(rng.random_range(-1.0..1.0) * top, sign * eta)
            }
        };
        let m = model.reduced(z)?;
        let bound = ratio_bound(z, w1);
        for _ in 0..cfg.n_vectors {
            let f = random_unit(rng, k);
            let q = (f.adjoint() * &m * &f)[(0, 0)];
            let excess = q.re - bound * q.im.abs();
            // Relative to the size of the form so large |chi_s| near poles is not penalized.
            worst = worst.max(excess / q.norm().max(1.0));
            count += 1;
        }
    }
    if count == 0 {
        worst = 0.0;
    }
    Ok(RatioCheck { n_evaluations: count, worst_excess: worst, passed: worst <= cfg.ratio_slack })
}

fn blowup_samples(model: &SymmetrizedModel, poles: &[f64], upper: f64, n: usize) -> Vec<f64> {
    let mut s: Vec<f64> = (0..=n).map(|i| upper * i as f64 / n.max(1) as f64).collect();
    s.extend(poles.iter().copied());
    s.extend(model.table.groups.iter().map(|g| g.omega));
    s.sort_by(f64::total_cmp);
    s
}

fn check_blowup(model: &SymmetrizedModel, cfg: &PropertyConfig, poles: &[f64], upper: f64) -> Result<BlowupCheck> {
    use rayon::prelude::*;
    let k = model.range_dim();
    let samples = blowup_samples(model, poles, upper, cfg.n_blowup_samples);
    let mut constants = Vec::with_capacity(cfg.etas.len());
    for &eta in &cfg.etas {
        let vals = samples
            .par_iter()
            .map(|&w| -> Result<f64> {
                let z = Complex64::new(w, eta);
                let a = CMatrix::identity(k, k) - model.reduced(z)?;
                let inv = a.try_inverse().map_or(f64::INFINITY, |m| linalg::norm2_c(&m));
                // Off the range the resolvent is the identity.
                Ok(inv.max(1.0) * eta / z.norm())
            })
            .collect::<Result<Vec<_>>>()?;
        constants.push(vals.into_iter().fold(0.0, f64::max));
    }
    let mut worst: f64 = 1.0;
    for w in constants.windows(2) {
        let r = if w[0] > w[1] { w[0] / w[1] } else { w[1] / w[0] };
        worst = worst.max(r);
    }
    let passed = constants.iter().all(|c| c.is_finite()) && worst <= cfg.blowup_factor;
    Ok(BlowupCheck { etas: cfg.etas.clone(), constants, worst_ratio: worst, passed })
}

fn check_nsd(model: &SymmetrizedModel, cfg: &PropertyConfig) -> Result<NsdCheck> {
    let w1 = model.lowest_pole();
    let mut max_eig = f64::NEG_INFINITY;
    if model.range_dim() == 0 {
        max_eig = 0.0;
    } else {
        let top = if w1.is_finite() { w1 * 0.999 } else { 10.0 * model.table.max_omega() };
        for i in 0..cfg.n_nsd_samples {
            let w = top * i as f64 / cfg.n_nsd_samples.max(1) as f64;
            for omega in [w, -w] {
                // Uncoupled poles below w1 do not enter the reduced form.
                if model.table.groups.iter().any(|g| (g.omega - omega.abs()).abs() < 1e-9) {
                    continue;
                }
                max_eig = max_eig.max(model.eigs_desc(omega)?[0]);
            }
        }
    }
    Ok(NsdCheck { omega_1: w1, max_eigenvalue: max_eig, passed: max_eig <= cfg.nsd_tol })
}

fn check_monotone(model: &SymmetrizedModel, cfg: &PropertyConfig, upper: f64) -> Result<MonotoneCheck> {
    let mut edges = vec![0.0];
    edges.extend(model.table.groups.iter().map(|g| g.omega));
    edges.push(upper.max(model.table.max_omega() * 1.5));
    let mut intervals = Vec::new();
    let mut worst = 0.0_f64;
    let mut passed = true;
    for w in edges.windows(2) {
        let gap = w[1] - w[0];
        let pad = (1e-3 * gap).max(1e-8);
        let lo = if w[0] == 0.0 { 0.0 } else { w[0] + pad };
        let hi = w[1] - pad;
        if !(lo < hi) || model.range_dim() == 0 {
            continue;
        }
        let scan = eig_curves(model, (lo, hi), cfg.n_curve_samples)?;
        worst = worst.max(scan.worst_increase);
        passed &= scan.all_monotone();
        intervals.push((lo, hi));
    }
    Ok(MonotoneCheck { intervals, worst_increase: worst, passed })
}

fn contour_radius(center: f64, others: &[f64], cap: f64) -> f64 {
    let near = others.iter().map(|q| (q - center).abs()).filter(|&d| d > 1e-9).fold(f64::INFINITY, f64::min);
    (0.4 * near).min(cap).min(0.4 * center)
}

/// Runs every check of the property suite on one model.
pub fn property_checks(model: &SymmetrizedModel, cfg: &PropertyConfig) -> Result<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scan = find_rpa_poles(model, &cfg.scan)?;
    let mut pathologies = scan.pathologies.clone();
    let poles = scan.poles();
    let pole_omegas: Vec<f64> = poles.iter().map(|p| p.omega).collect();
    let mut all_poles = pole_omegas.clone();
    all_poles.extend(model.table.groups.iter().map(|g| g.omega));

    let ratio = check_ratio(model, cfg, &mut rng)?;
    let blowup = check_blowup(model, cfg, &pole_omegas, scan.upper_bound)?;
    let nsd = check_nsd(model, cfg)?;
    let monotone = check_monotone(model, cfg, scan.upper_bound)?;

    let mut annihilation = Vec::new();
    for (j, group) in model.groups.iter().enumerate() {
        if group.dim == 0 {
            continue;
        }
        let r = contour_radius(group.omega, &all_poles, cfg.max_radius);
        match riesz_rank(model, group.omega, r, cfg.n_quad, &pole_omegas) {
            Ok(res) => {
                let relative = if res.rank == 0 { 0.0 } else { res.annihilation(&group.basis) };
                annihilation.push(AnnihilationRecord {
                    group: j,
                    omega: group.omega,
                    dim: group.dim,
                    contour_rank: res.rank,
                    residue_norm: res.residue_norm,
                    relative,
                    passed: relative <= cfg.annihilation_tol,
                });
            }
            Err(e) => pathologies.push(format!("contour at coincident pole {}: {e}", group.omega)),
        }
    }

    let mut rank_identity = Vec::new();
    for p in scan.interior.iter().chain(scan.coincident.iter().filter(|p| p.resolvent_rank > 0)) {
        let coincident = p.kind == super::PoleKind::Coincident;
        let r = contour_radius(p.omega, &all_poles, cfg.max_radius);
        let a = riesz_rank(model, p.omega, r, cfg.n_quad, &pole_omegas);
        let b = rpa_contour_rank(model, p.omega, r, cfg.n_quad, &pole_omegas);
        match (a, b) {
            (Ok(a), Ok(b)) => rank_identity.push(RankIdentityRecord {
                omega: p.omega,
                coincident,
                multiplicity: p.resolvent_rank,
                resolvent_contour_rank: a.rank,
                rpa_contour_rank: b.rank,
                simplicity: a.simplicity,
                passed: a.rank == p.resolvent_rank && b.rank == p.resolvent_rank,
            }),
            (Err(e), _) | (_, Err(e)) => {
                pathologies.push(format!("contour at pole {}: {e}", p.omega));
                rank_identity.push(RankIdentityRecord {
                    omega: p.omega,
                    coincident,
                    multiplicity: p.resolvent_rank,
                    resolvent_contour_rank: 0,
                    rpa_contour_rank: 0,
                    simplicity: f64::NAN,
                    passed: false,
                });
            }
        }
    }

    Ok(PropertyReport { ratio, blowup, nsd, monotone, annihilation, bookkeeping: scan.bookkeeping, rank_identity, pathologies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poles::tests::random_model;

    #[test]
    fn ratio_bound_branches() {
        assert_eq!(ratio_bound(Complex64::new(0.0, 0.3), 1.0), 0.0);
        assert_eq!(ratio_bound(Complex64::new(0.5, 0.0), 1.0), 0.0);
        let b = ratio_bound(Complex64::new(2.0, 0.5), 1.0);
        assert!((b - (4.0 - 0.25 - 1.0) / 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_models_pass() {
        for seed in 0..3 {
            let (t, f, s) = random_model(6, &[0.9, 1.4, 2.2], seed);
            let m = SymmetrizedModel::new(&t, &f, &s).unwrap();
            let cfg = PropertyConfig { n_vectors: 20, n_points: 20, ..PropertyConfig::default() };
            let r = property_checks(&m, &cfg).unwrap();
            assert!(r.passed(), "{r:#?}");
            assert!(r.pathologies.is_empty(), "{:?}", r.pathologies);
        }
    }
}
