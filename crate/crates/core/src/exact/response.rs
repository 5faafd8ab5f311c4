//! Exact response of the two-fermion model: Lehmann sums in time and
//! frequency, pole ranks and an independent scan for the poles.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{DensityCoupling, ManyBodyHamiltonian, ManyBodySpectrum};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::response::{POLE_GUARD, RANK_TOL};

/// States with `||S Psi_j|| <= BRIGHT_TOL` are dark.
pub const BRIGHT_TOL: f64 = 1e-10;

/// `sum_{j >= 1} -2 sin((E_j - E_0) t) (S Psi_j)(S Psi_j)^T dx`.
pub fn exact_chi_time(spec: &ManyBodySpectrum, s: &DensityCoupling, t: f64) -> Result<DMatrix<f64>> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    let img = s.excited_images(spec);
    let c = DVector::from_iterator(img.ncols(), spec.excitations().iter().map(|w| -2.0 * (w * t).sin() * s.dx));
    Ok(&img * DMatrix::from_diagonal(&c) * img.transpose())
}

/// `sum_{j >= 1} [1/(E_0 - z - E_j) + 1/(E_0 + z - E_j)] (S Psi_j)(S Psi_j)^T dx`.
pub fn exact_chi_freq(spec: &ManyBodySpectrum, s: &DensityCoupling, z: Complex64) -> Result<CMatrix> {
    let img = linalg::to_complex(&s.excited_images(spec));
    let mut c = Vec::with_capacity(img.ncols());
    for w in spec.excitations() {
        let d = z * z - w * w;
        if d.norm() <= POLE_GUARD {
            return Err(Error::AtPole { re: z.re, im: z.im });
        }
        c.push(2.0 * w / d * s.dx);
    }
    let scaled = CMatrix::from_fn(img.nrows(), img.ncols(), |i, j| img[(i, j)] * c[j]);
    Ok(scaled * img.transpose())
}

/// `S [(E_0 - z - H)^{-1} + (E_0 + z - H)^{-1}] S^*` from linear solves
/// with the full many-body Hamiltonian, bypassing its eigenvectors except
/// for the ground state inside `S`.
pub fn resolvent_chi_freq(h: &ManyBodyHamiltonian, spec: &ManyBodySpectrum, s: &DensityCoupling, z: Complex64) -> Result<CMatrix> {
    let d = h.basis.dim();
    let hc = linalg::to_complex(&h.matrix);
    let e0 = spec.ground_energy();
    // S^* g = dx S^T g in coefficient space.
    let rhs = linalg::to_complex(&(s.matrix.transpose() * s.dx));
    let mut total = CMatrix::zeros(d, rhs.ncols());
    for shift in [e0 - z, e0 + z] {
        let a = CMatrix::identity(d, d) * shift - &hc;
        let lu = a.lu();
        total += lu.solve(&rhs).ok_or(Error::AtPole { re: z.re, im: z.im })?;
    }
    Ok(linalg::to_complex(&s.matrix) * total)
}

fn grouped(spec: &ManyBodySpectrum, group_tol: f64) -> Vec<Vec<usize>> {
    let w = spec.excitations();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (j, &wj) in w.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if wj - w[*g.last().expect("groups are nonempty")] <= group_tol => g.push(j),
            _ => groups.push(vec![j]),
        }
    }
    groups
}

/// `(E_j - E_0, rank)` per degeneracy group with at least one bright state;
/// the rank is the numerical rank of the stacked `sqrt(dx) S Psi_j`.
pub fn exact_pole_ranks(spec: &ManyBodySpectrum, s: &DensityCoupling, group_tol: f64) -> Vec<(f64, usize)> {
    let img = s.excited_images(spec) * s.dx.sqrt();
    let w = spec.excitations();
    let mut out = Vec::new();
    for g in grouped(spec, group_tol) {
        let bright: Vec<usize> = g.iter().copied().filter(|&j| img.column(j).norm() > BRIGHT_TOL).collect();
        if bright.is_empty() {
            continue;
        }
        let stacked = DMatrix::from_fn(img.nrows(), bright.len(), |i, c| img[(i, bright[c])]);
        let rank = linalg::numerical_rank(&stacked, RANK_TOL, BRIGHT_TOL);
        let omega = g.iter().map(|&j| w[j]).sum::<f64>() / g.len() as f64;
        out.push((omega, rank));
    }
    out
}

/// Eigenvalues of the symmetric tridiagonal `(d, e)` below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = d[0] - x;
    for i in 0..d.len() {
        if i > 0 {
            q = d[i] - x - e[i - 1] * e[i - 1] / q;
        }
        if q == 0.0 {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `k`-th smallest eigenvalue of the tridiagonal by bisection on the Sturm count.
fn sturm_eigenvalue(d: &[f64], e: &[f64], k: usize, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let tol = 1e-15 * lo.abs().max(hi.abs()).max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `(T - sigma) X = B` for tridiagonal `T` with partial pivoting.
fn tridiagonal_solve(d: &[f64], e: &[f64], sigma: f64, b: &mut DMatrix<f64>) {
    let n = d.len();
    let scale = d.iter().chain(e).fold(0.0_f64, |a, &v| a.max(v.abs())).max(1.0);
    let guard = f64::EPSILON * scale;
    let mut dd: Vec<f64> = d.iter().map(|&v| v - sigma).collect();
    let mut dl: Vec<f64> = e.to_vec();
    let mut du: Vec<f64> = e.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    for i in 0..n.saturating_sub(1) {
        if dd[i].abs() >= dl[i].abs() {
            if dd[i] == 0.0 {
                dd[i] = guard;
            }
            let fact = dl[i] / dd[i];
            dd[i + 1] -= fact * du[i];
            for c in 0..b.ncols() {
                let v = b[(i, c)];
                b[(i + 1, c)] -= fact * v;
            }
        } else {
            let fact = dd[i] / dl[i];
            dd[i] = dl[i];
            let temp = dd[i + 1];
            dd[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            for c in 0..b.ncols() {
                let (x, y) = (b[(i, c)], b[(i + 1, c)]);
                b[(i, c)] = y;
                b[(i + 1, c)] = x - fact * y;
            }
        }
        dl[i] = 0.0;
    }
    if dd[n - 1] == 0.0 {
        dd[n - 1] = guard;
    }
    for c in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut v = b[(i, c)];
            if i + 1 < n {
                v -= du[i] * b[(i + 1, c)];
            }
            if i + 2 < n {
                v -= du2[i] * b[(i + 2, c)];
            }
            b[(i, c)] = v / dd[i];
        }
    }
}

/// Poles of the exact response among the lowest `n_levels` many-body
/// levels, computed without the dense eigensolver: the Hamiltonian is
/// reduced to tridiagonal form, its levels are located by bisection on the
/// Sturm count and clustered within `group_tol`, and each cluster's
/// invariant subspace `Q` comes from block inverse iteration. The residue
/// of `chi` at `E_j - E_0` is `(S Q)(S Q)^T dx`, whose numerical rank is
/// the pole rank; clusters with zero rank are dark.
pub fn locate_exact_poles(h: &ManyBodyHamiltonian, n_levels: usize, group_tol: f64) -> Result<Vec<(f64, usize)>> {
    use rand::{Rng, SeedableRng};
    let dim = h.basis.dim();
    if n_levels < 2 || n_levels > dim {
        return Err(Error::InvalidDomain(format!("n_levels = {n_levels} must lie in [2, {dim}]")));
    }
    let (q, diag, off) = nalgebra::SymmetricTridiagonal::new(h.matrix.clone()).unpack();
    let d: Vec<f64> = diag.iter().copied().collect();
    let e: Vec<f64> = off.iter().copied().collect();
    let radius = (0..dim)
        .map(|i| {
            let left = if i > 0 { e[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < dim { e[i].abs() } else { 0.0 };
            (d[i] - left - right, d[i] + left + right)
        })
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    let (lo, hi) = (radius.0 - 1e-9, radius.1 + 1e-9);
    let levels: Vec<f64> = (0..n_levels).map(|k| sturm_eigenvalue(&d, &e, k, lo, hi)).collect();

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (k, &l) in levels.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if l - levels[*c.last().expect("clusters are nonempty")] <= group_tol => c.push(k),
            _ => clusters.push(vec![k]),
        }
    }
    if clusters[0].len() > 1 {
        return Err(Error::DegenerateGroundState { gap: levels[1] - levels[0], tol: group_tol });
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let scale = lo.abs().max(hi.abs()).max(1.0);
    let mut subspaces = Vec::with_capacity(clusters.len());
    for c in &clusters {
        let mean = c.iter().map(|&k| levels[k]).sum::<f64>() / c.len() as f64;
        let sigma = mean + 1e-13 * scale;
        let mut y = DMatrix::from_fn(dim, c.len(), |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..3 {
            tridiagonal_solve(&d, &e, sigma, &mut y);
            y = y.qr().q();
        }
        subspaces.push((mean, &q * y));
    }

    let dx = h.grid.dx();
    let u0 = subspaces[0].1.column(0).into_owned();
    let s = DensityCoupling::from_ground(&h.basis, &u0, dx);
    let e0 = subspaces[0].0;
    let mut out = Vec::new();
    for (mean, v) in subspaces.iter().skip(1) {
        let img = &s.matrix * v * dx.sqrt();
        let rank = linalg::numerical_rank(&img, RANK_TOL, BRIGHT_TOL);
        if rank > 0 {
            out.push((mean - e0, rank));
        }
    }
    Ok(out)
}
