//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::time::Instant;

use ddrf::dyson::{
    chi0_series_reduced, dyson_solve_march, dyson_solve_picard, fourier_transform_series, inverse_map, TimeGrid, VolterraConfig,
    VolterraMethod,
};
use ddrf::exact::{
    build_mb_hamiltonian, exact_chi_freq, exact_chi_time, exact_pole_ranks, kubo_check, locate_exact_poles, mb_spectrum, DensityCoupling,
    ManyBodyHamiltonian, ManyBodySpectrum, PerturbationSetup, TimeProfile, BRIGHT_TOL, DEFAULT_DIM_CAP, DEFAULT_GAP_TOL,
};
use ddrf::grid::{assemble_hamiltonian, build_grid, diagonalize, OrbitalOccupation, PotentialSpec, UniformGrid};
use ddrf::kernels::InteractionKernel;
use ddrf::linalg::{self, fitted_order};
use ddrf::poles::{
    casida_matrix, chi_rpa_freq, default_samples, find_rpa_poles, forward_shift_report, property_checks, riesz_rank, PoleMethod,
    PropertyConfig, PropertyReport, ScanConfig,
};
use ddrf::response::{build_transitions, chi0_freq, chi0_pole_table, chi0_time, DEFAULT_GROUP_TOL, RANK_TOL};
use ddrf::suite::{bundled_suite, coincident_models, scalar_toy, scalar_toy_frequency, SuiteModel};
use ddrf::Result;
use nalgebra::DVector;
use num_complex::Complex64;

const TOY: (f64, f64, f64) = (1.0, 0.5, 0.8);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn suite_models() -> Vec<SuiteModel> {
    bundled_suite().iter().map(|c| c.build().expect("bundled model builds").model).collect()
}

/// Time step resolving the fastest RPA frequency of the model.
fn time_grid(m: &SuiteModel, horizon: f64, cap: f64) -> Result<TimeGrid> {
    let top = casida_matrix(&m.table, &m.kernel)?.frequencies().iter().fold(m.table.max_omega(), |a, &b| a.max(b));
    TimeGrid::covering(cap.min(0.1 / top), horizon)
}

fn picard() -> VolterraConfig {
    VolterraConfig { method: VolterraMethod::Picard, ..VolterraConfig::default() }
}

fn criterion_1() -> Result<Outcome> {
    let (w1, beta, g) = TOY;
    let m = scalar_toy(w1, beta, g)?;
    let wt = scalar_toy_frequency(w1, beta, g);
    let dts = [2e-3, 1e-3, 5e-4];
    let mut errs = [Vec::new(), Vec::new()];
    for &dt in &dts {
        let x = chi0_series_reduced(&m.table, TimeGrid::covering(dt, 10.0)?)?;
        let a = dyson_solve_march(&x, &m.kernel)?;
        let (b, _) = dyson_solve_picard(&x, &m.kernel, &picard())?;
        for (slot, y) in [a, b].iter().enumerate() {
            let e = (0..y.time.len())
                .map(|k| {
                    let t = y.time.time(k);
                    (y.full_at(k)[(0, 0)] + 2.0 * beta * w1 / wt * (wt * t).sin()).abs()
                })
                .fold(0.0, f64::max);
            errs[slot].push(e);
        }
    }
    let orders: Vec<f64> = errs.iter().map(|e| fitted_order(&dts, e)).collect();
    let consts: Vec<f64> = errs.iter().map(|e| e.iter().zip(&dts).map(|(e, h)| e / (h * h)).fold(0.0, f64::max)).collect();
    let time_ok = orders.iter().all(|p| (p - 2.0).abs() <= 0.3);

    let model = m.symmetrized()?;
    let scan = find_rpa_poles(&model, &ScanConfig::default())?;
    let poles = scan.poles();
    let bis_ok = poles.len() == 1 && poles[0].method == PoleMethod::Bisection && poles[0].rank == 1 && (poles[0].omega - wt).abs() <= 1e-8;
    let cas_ok = scan.casida.len() == 1 && scan.casida[0].rank == 1 && (scan.casida[0].omega - wt).abs() <= 1e-8;
    let contour = riesz_rank(&model, wt, 0.05, 128, &[w1])?;
    let con_ok = contour.rank == 1 && (contour.location - wt).abs() <= 1e-8;
    Ok(outcome(
        time_ok && bis_ok && cas_ok && con_ok,
        format!(
            "orders march {:.3} picard {:.3} (C = {:.3e}, {:.3e}); pole {wt:.12}: bisection {} casida {} contour {} (|dw| {:.1e})",
            orders[0],
            orders[1],
            consts[0],
            consts[1],
            bis_ok,
            cas_ok,
            con_ok,
            (contour.location - wt).abs()
        ),
    ))
}

fn criterion_2(models: &[SuiteModel]) -> Result<Outcome> {
    let mut bad = Vec::new();
    let mut n_samples = 0;
    let mut n_equal = 0;
    for m in models {
        let model = m.symmetrized()?;
        let scan = find_rpa_poles(&model, &ScanConfig::default())?;
        let rpa: Vec<(f64, usize)> = scan.poles().iter().map(|p| (p.omega, p.rank)).collect();
        let chi0 = chi0_pole_table(&m.table);
        let samples = default_samples(&chi0, &rpa, 1.05 * scan.upper_bound, 400);
        let report = forward_shift_report(&chi0, &rpa, &samples);
        n_samples += report.samples.len();
        n_equal += report.n_equal();
        if !report.holds {
            bad.push(format!("{}: {} violations", m.name, report.violations().count()));
        }
        if !scan.pathologies.is_empty() {
            bad.push(format!("{}: {}", m.name, scan.pathologies.join("; ")));
        }
    }
    Ok(outcome(bad.is_empty(), format!("{} models, {n_samples} samples, {n_equal} with equality{}", models.len(), fmt_bad(&bad))))
}

fn fmt_bad(bad: &[String]) -> String {
    if bad.is_empty() {
        String::new()
    } else {
        format!("; {}", bad.join(" | "))
    }
}

fn criterion_3(models: &[SuiteModel]) -> Result<Outcome> {
    let mut worst = (0.0_f64, 0.0_f64);
    for m in models {
        let x = chi0_series_reduced(&m.table, time_grid(m, 10.0, 0.01)?)?;
        let a = dyson_solve_march(&x, &m.kernel)?;
        let (b, _) = dyson_solve_picard(&x, &m.kernel, &picard())?;
        worst.0 = worst.0.max(a.max_diff(&b)?);
        worst.1 = worst.1.max(inverse_map(&a, &m.kernel)?.max_diff(&x)?);
    }
    Ok(outcome(
        worst.0 <= 1e-9 && worst.1 <= 1e-8,
        format!("{} models: march vs picard {:.2e} (<= 1e-9), inverse round trip {:.2e} (<= 1e-8)", models.len(), worst.0, worst.1),
    ))
}

fn criterion_4(models: &[SuiteModel]) -> Result<Outcome> {
    let (w1, beta, g) = TOY;
    let mut cases = vec![scalar_toy(w1, beta, g)?];
    cases.extend(models.iter().take(2).cloned());
    let zs =
        [Complex64::new(0.3, 1.0), Complex64::new(0.7, 1.5), Complex64::new(1.1, 1.2), Complex64::new(2.0, 1.0), Complex64::new(-1.4, 2.0)];
    let mut worst = 0.0_f64;
    for m in &cases {
        let x = chi0_series_reduced(&m.table, time_grid(m, 26.0, 5e-4)?)?;
        let y = dyson_solve_march(&x, &m.kernel)?;
        for &z in &zs {
            let a = fourier_transform_series(&y, z)?;
            let b = chi_rpa_freq(&m.table, &m.kernel, &m.fsqrt, z)?;
            worst = worst.max(linalg::max_abs_c(&(a - b)));
        }
    }
    Ok(outcome(worst <= 1e-6, format!("{} models x {} points, max deviation {worst:.2e} (<= 1e-6)", cases.len(), zs.len())))
}

/// Harmonic trap plus an off-centre soft-Coulomb well.
fn trap(g: &UniformGrid) -> PotentialSpec {
    PotentialSpec::Tabulated { values: g.points().iter().map(|x| 0.5 * x * x - 1.0 / ((x - 1.0).powi(2) + 1.0).sqrt()).collect() }
}

fn exact_model(n: usize, w: &InteractionKernel) -> Result<(ManyBodyHamiltonian, ManyBodySpectrum, DensityCoupling)> {
    let g = build_grid(-5.0, 5.0, n)?;
    let h = assemble_hamiltonian(&g, &trap(&g))?;
    let mb = build_mb_hamiltonian(&h, w, DEFAULT_DIM_CAP)?;
    let spec = mb_spectrum(&mb, mb.basis.dim(), DEFAULT_GAP_TOL)?;
    let s = DensityCoupling::new(&spec);
    Ok((mb, spec, s))
}

fn criterion_5() -> Result<Outcome> {
    let (_, spec, s) = exact_model(20, &InteractionKernel::SoftCoulomb { softening: 1.0, strength: 1.0 })?;
    let x = DVector::from_vec(spec.grid.points());
    let setup = PerturbationSetup {
        v_p: x.clone(),
        v_o: x,
        profile: TimeProfile::Sine { frequency: 0.7 },
        epsilon: 1e-2,
        dt: 2e-3,
        t_final: 10.0,
        record_every: 1,
    };
    let r = kubo_check(&spec, &s, &setup, &[1e-2, 5e-3, 2.5e-3])?;
    let ok = (1.8..=2.2).contains(&r.exponent) && r.relative[0] <= 5e-3;
    Ok(outcome(
        ok,
        format!(
            "exponent {:.3} (in [1.8, 2.2]), relative deviation at 1e-2 {:.2e} (<= 5e-3), norm drift {:.1e}",
            r.exponent, r.relative[0], r.max_norm_drift
        ),
    ))
}

/// Direct oracle: degenerate groups of bright excited states and the
/// numerical rank of their stacked density images.
fn bright_groups(spec: &ManyBodySpectrum, s: &DensityCoupling) -> Vec<(f64, usize)> {
    let img = s.excited_images(spec) * s.dx.sqrt();
    let exc = spec.excitations();
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=exc.len() {
        if i == exc.len() || exc[i] - exc[i - 1] > DEFAULT_GROUP_TOL {
            let block = img.columns(start, i - start).into_owned();
            if block.column_iter().any(|c| c.norm() > BRIGHT_TOL) {
                let omega = exc[start..i].iter().sum::<f64>() / (i - start) as f64;
                out.push((omega, linalg::numerical_rank(&block, RANK_TOL, BRIGHT_TOL)));
            }
            start = i;
        }
    }
    out
}

fn criterion_6() -> Result<Outcome> {
    let mut notes = Vec::new();
    let mut ok = true;
    for (label, w) in
        [("w = 0", InteractionKernel::Zero), ("soft Coulomb", InteractionKernel::SoftCoulomb { softening: 1.0, strength: 1.0 })]
    {
        let (mb, spec, s) = exact_model(14, &w)?;
        let located = locate_exact_poles(&mb, spec.n_states(), DEFAULT_GROUP_TOL)?;
        let oracle = bright_groups(&spec, &s);
        let listed = exact_pole_ranks(&spec, &s, DEFAULT_GROUP_TOL);
        let same = |a: &[(f64, usize)], b: &[(f64, usize)]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x.0 - y.0).abs() <= 1e-9 && x.1 == y.1)
        };
        let pass = same(&located, &oracle) && same(&listed, &oracle);
        ok &= pass;
        notes.push(format!("{label}: {} poles, located {} listed {}", oracle.len(), located.len(), listed.len()));
    }

    let n = 16;
    let (_, spec, s) = exact_model(n, &InteractionKernel::Zero)?;
    let g = build_grid(-5.0, 5.0, n)?;
    let eig = diagonalize(&assemble_hamiltonian(&g, &trap(&g))?)?;
    let table = build_transitions(&eig, &OrbitalOccupation::new(2, n - 2), DEFAULT_GROUP_TOL)?;
    let mut dev = 0.0_f64;
    for t in [0.5, 2.0, 7.0] {
        dev = dev.max(linalg::max_abs(&(exact_chi_time(&spec, &s, t)? - chi0_time(&table, t)?)));
    }
    for z in [Complex64::new(0.7, 0.5), Complex64::new(2.5, 0.05), Complex64::new(0.0, 3.0)] {
        dev = dev.max(linalg::max_abs_c(&(exact_chi_freq(&spec, &s, z)? - chi0_freq(&table, z)?)));
    }
    let a = exact_pole_ranks(&spec, &s, DEFAULT_GROUP_TOL);
    let b = chi0_pole_table(&table);
    let tables_ok = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| (x.0 - y.0).abs() <= 1e-8 && x.1 == y.1);
    ok &= dev <= 1e-8 && tables_ok;
    notes.push(format!("non-interacting limit: max deviation {dev:.1e} (<= 1e-8), pole tables equal {tables_ok}"));
    Ok(outcome(ok, notes.join("; ")))
}

fn property_reports(models: &[SuiteModel]) -> Result<Vec<(String, PropertyReport)>> {
    let cfg = PropertyConfig::default();
    models.iter().map(|m| Ok((m.name.clone(), property_checks(&m.symmetrized()?, &cfg)?))).collect()
}

fn criterion_7(reports: &[(String, PropertyReport)]) -> Outcome {
    let mut bad = Vec::new();
    let mut dims = [0usize; 3];
    let mut n_annihilation = 0;
    for (name, r) in reports {
        let flags = [
            ("monotone", r.monotone.passed),
            ("ratio", r.ratio.passed),
            ("blow-up", r.blowup.passed),
            ("nsd", r.nsd.passed),
            ("annihilation", r.annihilation_passed()),
            ("bookkeeping", r.bookkeeping_passed()),
        ];
        for (label, pass) in flags {
            if !pass {
                bad.push(format!("{name}: {label}"));
            }
        }
        for b in &r.bookkeeping {
            if b.dim <= 2 && b.holds {
                dims[b.dim] += 1;
            }
        }
        n_annihilation += r.annihilation.len();
    }
    if dims[1] == 0 || dims[2] == 0 {
        bad.push(format!("bookkeeping coverage dim 1: {}, dim 2: {}", dims[1], dims[2]));
    }
    outcome(
        bad.is_empty(),
        format!(
            "{} models; bookkeeping passes at {} dim-1 and {} dim-2 groups; {n_annihilation} annihilation checks{}",
            reports.len(),
            dims[1],
            dims[2],
            fmt_bad(&bad)
        ),
    )
}

fn criterion_8(reports: &[(String, PropertyReport)]) -> Outcome {
    let mut bad = Vec::new();
    let (mut interior, mut coincident) = (0, 0);
    for (name, r) in reports {
        for rec in &r.rank_identity {
            if rec.coincident {
                coincident += 1;
            } else {
                interior += 1;
            }
            if !rec.passed {
                bad.push(format!(
                    "{name} at {:.6}: multiplicity {} resolvent {} rpa {}",
                    rec.omega, rec.multiplicity, rec.resolvent_contour_rank, rec.rpa_contour_rank
                ));
            }
        }
        if !r.pathologies.is_empty() {
            bad.push(format!("{name}: {}", r.pathologies.join("; ")));
        }
    }
    if coincident == 0 {
        bad.push("no coincident pole with a resolvent pole was checked".into());
    }
    outcome(bad.is_empty(), format!("{interior} interior and {coincident} coincident poles compared{}", fmt_bad(&bad)))
}

fn run(id: usize, title: &str, f: impl FnOnce() -> Result<Outcome>) -> bool {
    let start = Instant::now();
    let o = f().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    println!("criterion {id} [{}] {title}: {} ({:.1} s)", if o.passed { "PASS" } else { "FAIL" }, o.detail, start.elapsed().as_secs_f64());
    o.passed
}

fn main() {
    let models = suite_models();
    let mut extended = models.clone();
    extended.extend(coincident_models().expect("coincident models build"));
    let reports = property_reports(&extended);
    let results = [
        run(1, "scalar toy closed form", criterion_1),
        run(2, "forward shift on the bundled suite", || criterion_2(&models)),
        run(3, "uniqueness and bijection", || criterion_3(&models)),
        run(4, "cross-domain consistency", || criterion_4(&models)),
        run(5, "Kubo validation", criterion_5),
        run(6, "Lehmann poles and ranks", criterion_6),
        run(7, "structural property suite", || Ok(criterion_7(reports.as_ref().map_err(clone_err)?))),
        run(8, "rank identity", || Ok(criterion_8(reports.as_ref().map_err(clone_err)?))),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn clone_err(e: &ddrf::Error) -> ddrf::Error {
    ddrf::Error::NumericalFailure(e.to_string())
}
