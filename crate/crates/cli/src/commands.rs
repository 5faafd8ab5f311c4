//! One function per subcommand. Each writes its artifacts through the
//! [`Writer`] and returns the named property verdicts of the run.

use std::fmt::Write as _;
use std::time::Instant;

use ddrf::dyson::{
    chi0_series_full, chi0_series_reduced, dyson_residual, dyson_solve_march, dyson_solve_picard, fourier_transform_series, growth_rate,
    inverse_map, write_series, OperatorSeries, PicardReport, TimeGrid, VolterraMethod,
};
use ddrf::exact::{
    build_mb_hamiltonian, exact_pole_ranks, kubo_check, kubo_convolution, locate_exact_poles, mb_spectrum, tdse_propagate, DensityCoupling,
    PerturbationSetup,
};
use ddrf::grid::assemble_hamiltonian;
use ddrf::kernels::InteractionKernel;
use ddrf::linalg;
use ddrf::poles::{
    chi_rpa_freq, curves_csv, default_samples, eig_curves, find_rpa_poles, forward_shift_report, poles_csv, property_checks,
};
use ddrf::response::chi0_pole_table;
use ddrf::suite::{bundled_suite, scalar_toy, SuiteModel};
use log::info;
use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigError, RunConfig};
use crate::output::{PropertyResult, Timing, Writer};

/// Failure that aborts a run before its properties are judged.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("io: {e}"))
    }
}

/// Library errors caused by the inputs are configuration errors charged to
/// `field`; the rest are numerical failures.
fn lib(field: &'static str) -> impl Fn(ddrf::Error) -> Failure {
    use ddrf::Error as E;
    move |e| match e {
        E::InvalidDomain(_)
        | E::ShapeMismatch { .. }
        | E::NonFinite(_)
        | E::NotPsd { .. }
        | E::DegenerateFermiLevel { .. }
        | E::DegenerateGroundState { .. }
        | E::StepTooLarge(_)
        | E::UnresolvedTimeGrid(_)
        | E::TailNotDamped(_)
        | E::MemoryBudget { .. }
        | E::EmptyModel(_)
        | E::Parse(_) => Failure::Config(ConfigError::new(field, e.to_string())),
        other => Failure::Numerical(other.to_string()),
    }
}

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub out: Writer,
    pub properties: Vec<PropertyResult>,
    pub timings: Vec<Timing>,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a RunConfig, out: Writer) -> Self {
        Self { cfg, out, properties: Vec::new(), timings: Vec::new() }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool) {
        let name = name.into();
        info!("{name}: {}", if passed { "pass" } else { "FAIL" });
        self.properties.push(PropertyResult { name, passed });
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T, Failure>) -> Result<T, Failure> {
        let start = Instant::now();
        let r = f(self);
        self.timings.push(Timing { stage: stage.to_string(), seconds: start.elapsed().as_secs_f64() });
        r
    }
}

/// Models selected by `model`, `toy` or `suite`, with the output prefix of each.
fn targets(cx: &mut Context) -> Result<Vec<(String, SuiteModel)>, Failure> {
    let cfg = cx.cfg;
    cx.timed("build", |_| {
        if let Some(t) = &cfg.toy {
            return Ok(vec![(String::new(), scalar_toy(t.omega, t.beta, t.g).map_err(lib("toy"))?)]);
        }
        if let Some(m) = &cfg.model {
            return Ok(vec![(String::new(), m.build().map_err(lib("model"))?.model)]);
        }
        bundled_suite().iter().map(|m| Ok((m.name.clone(), m.build().map_err(lib("suite"))?.model))).collect()
    })
}

fn pole_rows(poles: &[(f64, usize)]) -> String {
    let mut s = String::from("omega,rank\n");
    for (w, r) in poles {
        writeln!(s, "{w:?},{r}").expect("writing to a String");
    }
    s
}

pub fn spectrum(cx: &mut Context) -> Result<(), Failure> {
    let m = cx.cfg.grid_model()?.clone();
    let built = cx.timed("diagonalize", |_| m.build().map_err(lib("model")))?;
    let eig = &built.eig;
    let count = (m.n_occupied + m.n_virtual).min(eig.eigenvalues.len());
    let mut ev = String::from("index,eigenvalue\n");
    for (i, e) in eig.eigenvalues.iter().enumerate() {
        writeln!(ev, "{i},{e:?}").expect("writing to a String");
    }
    cx.out.csv("", "eigenvalues.csv", &ev)?;
    let mut orb = String::from("x");
    for k in 0..count {
        write!(orb, ",psi_{k}").expect("writing to a String");
    }
    orb.push('\n');
    for i in 0..built.grid.len() {
        write!(orb, "{:?}", built.grid.point(i)).expect("writing to a String");
        for k in 0..count {
            write!(orb, ",{:?}", eig.eigenvectors[(i, k)]).expect("writing to a String");
        }
        orb.push('\n');
    }
    cx.out.csv("", "orbitals.csv", &orb)?;
    let residual = eig.orthonormality_residual();
    let decayed = eig.check_decay(m.n_occupied);
    cx.out.json(
        "",
        "spectrum.json",
        &json!({
            "eigenvalues": eig.eigenvalues.iter().take(count).collect::<Vec<_>>(),
            "orthonormality_residual": residual,
            "wall_amplitude": eig.wall_amplitude(m.n_occupied),
            "decayed": decayed,
            "transitions": built.model.table.len(),
        }),
    )?;
    cx.check("orthonormality", residual <= 1e-10);
    Ok(())
}

pub fn chi0_poles(cx: &mut Context) -> Result<(), Failure> {
    for (prefix, m) in targets(cx)? {
        let table = chi0_pole_table(&m.table);
        cx.out.csv(&prefix, "chi0_poles.csv", &pole_rows(&table))?;
        cx.out.json(&prefix, "chi0_poles.json", &table)?;
    }
    Ok(())
}

pub fn rpa_poles(cx: &mut Context) -> Result<(), Failure> {
    let cfg = cx.cfg;
    for (prefix, m) in targets(cx)? {
        let tag = if prefix.is_empty() { String::new() } else { format!("{prefix}: ") };
        let sym = m.symmetrized().map_err(lib("model"))?;
        let scan = cx.timed("scan", |_| find_rpa_poles(&sym, &cfg.scan).map_err(lib("scan")))?;
        cx.out.csv(&prefix, "rpa_poles.csv", &poles_csv(&scan.poles()))?;
        cx.out.csv(&prefix, "casida_poles.csv", &poles_csv(&scan.casida))?;
        cx.out.json(&prefix, "rpa_scan.json", &scan)?;
        // Eigencurves on each pole-free interval of the reference response.
        let start = cfg.scan.omega_min.max(0.0);
        let mut edges = vec![start];
        edges.extend(sym.omegas().into_iter().filter(|&w| w > start && w < scan.upper_bound));
        edges.push(scan.upper_bound);
        edges.dedup_by(|a, b| (*a - *b).abs() <= 2.0 * cfg.scan.padding);
        let mut monotone = true;
        let mut curves = String::new();
        for (i, w) in edges.windows(2).enumerate() {
            let (lo, hi) = (w[0] + cfg.scan.padding, w[1] - cfg.scan.padding);
            if hi <= lo {
                continue;
            }
            let c = cx.timed("eigencurves", |_| eig_curves(&sym, (lo, hi), cfg.scan.n_samples).map_err(lib("scan")))?;
            monotone &= c.all_monotone();
            let body = curves_csv(&c);
            let mut lines = body.lines();
            let header = lines.next().unwrap_or_default();
            if curves.is_empty() {
                writeln!(curves, "interval,{header}").expect("writing to a String");
            }
            for line in lines {
                writeln!(curves, "{i},{line}").expect("writing to a String");
            }
        }
        cx.out.csv(&prefix, "eigencurves.csv", &curves)?;
        cx.check(format!("{tag}eigencurves_monotone"), monotone);
        cx.check(format!("{tag}no_pathologies"), scan.pathologies.is_empty());
        if let Some(p) = &cfg.properties {
            let report = cx.timed("properties", |_| property_checks(&sym, p).map_err(lib("properties")))?;
            cx.out.json(&prefix, "properties.json", &report)?;
            cx.check(format!("{tag}ratio_inequality"), report.ratio.passed);
            cx.check(format!("{tag}blowup"), report.blowup.passed);
            cx.check(format!("{tag}static_nsd"), report.nsd.passed);
            cx.check(format!("{tag}monotone"), report.monotone.passed);
            cx.check(format!("{tag}annihilation"), report.annihilation_passed());
            cx.check(format!("{tag}bookkeeping"), report.bookkeeping_passed());
            cx.check(format!("{tag}rank_identity"), report.rank_identity_passed());
        }
    }
    Ok(())
}

pub fn shift_report(cx: &mut Context) -> Result<(), Failure> {
    let cfg = cx.cfg;
    let mut summary = Vec::new();
    for (prefix, m) in targets(cx)? {
        let sym = m.symmetrized().map_err(lib("model"))?;
        let scan = cx.timed("scan", |_| find_rpa_poles(&sym, &cfg.scan).map_err(lib("scan")))?;
        let rpa: Vec<(f64, usize)> = scan.poles().iter().map(|p| (p.omega, p.rank)).collect();
        let chi0 = chi0_pole_table(&m.table);
        let samples = default_samples(&chi0, &rpa, 1.05 * scan.upper_bound, cfg.scan.n_samples);
        let report = forward_shift_report(&chi0, &rpa, &samples);
        cx.out.json(&prefix, "shift_report.json", &report)?;
        let mut s = String::from("omega,chi0_count,rpa_count,holds,equality\n");
        for r in &report.samples {
            writeln!(s, "{:?},{},{},{},{}", r.omega, r.chi0_count, r.rpa_count, r.holds, r.equality).expect("writing to a String");
        }
        cx.out.csv(&prefix, "shift_samples.csv", &s)?;
        let name = if prefix.is_empty() { m.name.clone() } else { prefix.clone() };
        summary.push(json!({"model": name, "holds": report.holds, "n_equal": report.n_equal(), "n_samples": report.samples.len()}));
        let tag = if prefix.is_empty() { String::new() } else { format!("{prefix}: ") };
        cx.check(format!("{tag}forward_shift"), report.holds);
        cx.check(format!("{tag}no_pathologies"), scan.pathologies.is_empty());
    }
    let holds = cx.properties.iter().all(|p| p.passed);
    cx.out.json("", "shift_summary.json", &json!({"holds": holds, "models": summary}))?;
    Ok(())
}

#[derive(Serialize)]
struct DysonReport {
    method: VolterraMethod,
    dt: f64,
    n_steps: usize,
    residual: f64,
    residual_tol: f64,
    inverse_round_trip: f64,
    growth_rate: f64,
    picard: Option<PicardReport>,
}

fn solve_dyson(cx: &mut Context, m: &SuiteModel) -> Result<(OperatorSeries, DysonReport), Failure> {
    let cfg = cx.cfg;
    let t = cfg.time()?;
    let grid = TimeGrid::covering(t.dt, t.t_final).map_err(lib("time"))?;
    let chi0 = cx.timed("chi0_series", |_| {
        if t.full { chi0_series_full(&m.table, grid) } else { chi0_series_reduced(&m.table, grid) }.map_err(lib("time.dt"))
    })?;
    let (chi, picard) = cx.timed("dyson_solve", |_| match t.solver.method {
        VolterraMethod::March => Ok((dyson_solve_march(&chi0, &m.kernel).map_err(lib("time.solver"))?, None)),
        VolterraMethod::Picard => {
            let (c, r) = dyson_solve_picard(&chi0, &m.kernel, &t.solver).map_err(lib("time.solver"))?;
            Ok((c, Some(r)))
        }
    })?;
    let residual = cx.timed("residual", |_| dyson_residual(&chi0, &chi, &m.kernel).map_err(lib("time")))?;
    let inverse_round_trip =
        cx.timed("inverse_map", |_| inverse_map(&chi, &m.kernel).and_then(|back| back.max_diff(&chi0)).map_err(lib("time")))?;
    let report = DysonReport {
        method: t.solver.method,
        dt: grid.dt,
        n_steps: grid.n_steps,
        residual,
        residual_tol: cfg.dyson_residual_tol,
        inverse_round_trip,
        growth_rate: growth_rate(&chi).rate,
        picard,
    };
    Ok((chi, report))
}

fn single_target(cx: &mut Context) -> Result<SuiteModel, Failure> {
    let mut t = targets(cx)?;
    if t.len() != 1 {
        return Err(ConfigError::new("suite", "this subcommand needs a single `model` or `toy`").into());
    }
    Ok(t.remove(0).1)
}

pub fn dyson(cx: &mut Context) -> Result<(), Failure> {
    let m = single_target(cx)?;
    let (chi, report) = solve_dyson(cx, &m)?;
    let (csv, meta) = (cx.out.dir.join("chi_rpa.csv"), cx.out.dir.join("chi_rpa.json"));
    write_series(&chi, &csv, &meta).map_err(lib("outputs"))?;
    cx.out.written.extend([csv, meta]);
    cx.out.json("", "dyson_report.json", &report)?;
    cx.check("dyson_residual", report.residual <= report.residual_tol);
    cx.check("inverse_round_trip", report.inverse_round_trip <= 1e-8);
    Ok(())
}

pub fn fourier_check(cx: &mut Context) -> Result<(), Failure> {
    let f = cx.cfg.fourier.clone().ok_or_else(|| ConfigError::new("fourier", "required by fourier-check"))?;
    let m = single_target(cx)?;
    let (chi, report) = solve_dyson(cx, &m)?;
    let mut s = String::from("re_z,im_z,deviation,scale\n");
    let mut worst = 0.0_f64;
    let mut rows = Vec::new();
    for z in f.points() {
        let a = fourier_transform_series(&chi, z).map_err(lib("fourier.points"))?;
        let b = chi_rpa_freq(&m.table, &m.kernel, &m.fsqrt, z).map_err(lib("fourier.points"))?;
        let scale = linalg::max_abs_c(&b).max(1.0);
        let dev = linalg::max_abs_c(&(&a - &b)) / scale;
        worst = worst.max(dev);
        writeln!(s, "{:?},{:?},{dev:?},{scale:?}", z.re, z.im).expect("writing to a String");
        rows.push(json!({"z": [z.re, z.im], "deviation": dev}));
    }
    cx.out.csv("", "fourier_check.csv", &s)?;
    cx.out.json("", "fourier_check.json", &json!({"max_deviation": worst, "tol": f.tol, "points": rows, "dyson": report}))?;
    cx.check("fourier_agreement", worst <= f.tol);
    Ok(())
}

fn spectrum_for(
    cx: &mut Context,
) -> Result<(ddrf::exact::ManyBodyHamiltonian, ddrf::exact::ManyBodySpectrum, ddrf::grid::UniformGrid), Failure> {
    let m = cx.cfg.grid_model()?.clone();
    if m.n_occupied != 2 {
        return Err(ConfigError::new("model.n_occupied", "the exact two-fermion solver needs n_occupied = 2").into());
    }
    let e = cx.cfg.exact.clone();
    cx.timed("many_body", |_| {
        let grid = m.build_grid().map_err(lib("model.grid"))?;
        let h = assemble_hamiltonian(&grid, &m.potential).map_err(lib("model.potential"))?;
        let mb = build_mb_hamiltonian(&h, &m.kernel, e.dim_cap).map_err(lib("exact.dim_cap"))?;
        let n = e.n_states.unwrap_or(mb.basis.dim());
        let spec = mb_spectrum(&mb, n, e.gap_tol).map_err(lib("exact"))?;
        Ok((mb, spec, grid))
    })
}

pub fn kubo(cx: &mut Context) -> Result<(), Failure> {
    let k = cx.cfg.kubo.clone().ok_or_else(|| ConfigError::new("kubo", "required by the kubo subcommand"))?;
    let (_, spec, grid) = spectrum_for(cx)?;
    let s = DensityCoupling::new(&spec);
    let setup = PerturbationSetup {
        v_p: k.probe.sample(&grid, "kubo.probe")?,
        v_o: k.observable.sample(&grid, "kubo.observable")?,
        profile: k.profile.clone(),
        epsilon: k.epsilons[0],
        dt: k.dt,
        t_final: k.t_final,
        record_every: k.record_every,
    };
    let report = cx.timed("kubo", |_| kubo_check(&spec, &s, &setup, &k.epsilons).map_err(lib("kubo")))?;
    let run = tdse_propagate(&spec, &setup).map_err(lib("kubo"))?;
    let conv = kubo_convolution(&spec, &s, &setup).map_err(lib("kubo"))?;
    let mut out = String::from("t,observable,linear_response\n");
    for ((t, v), c) in run.times.iter().zip(&run.values).zip(&conv) {
        writeln!(out, "{t:?},{v:?},{:?}", report.baseline + setup.epsilon * c).expect("writing to a String");
    }
    cx.out.csv("", "tdse_series.csv", &out)?;
    cx.out.json("", "kubo_report.json", &report)?;
    if k.epsilons.len() >= 2 {
        cx.check("kubo_exponent", (1.8..=2.2).contains(&report.exponent));
    }
    cx.check("kubo_relative", report.relative[0] <= 5e-3);
    cx.check("norm_drift", report.max_norm_drift <= ddrf::exact::NORM_DRIFT_TOL);
    Ok(())
}

pub fn exact_mb(cx: &mut Context) -> Result<(), Failure> {
    let group_tol = cx.cfg.exact.group_tol;
    let (mb, spec, _) = spectrum_for(cx)?;
    let s = DensityCoupling::new(&spec);
    let mut e = String::from("index,energy,excitation,weight\n");
    let e0 = spec.ground_energy();
    for (j, en) in spec.energies.iter().enumerate() {
        let w = if j == 0 { 0.0 } else { s.weight(&spec.states.column(j).into_owned()) };
        writeln!(e, "{j},{en:?},{:?},{w:?}", en - e0).expect("writing to a String");
    }
    cx.out.csv("", "energies.csv", &e)?;
    let listed = exact_pole_ranks(&spec, &s, group_tol);
    let located = cx.timed("locate_poles", |_| locate_exact_poles(&mb, spec.n_states(), group_tol).map_err(lib("exact")))?;
    cx.out.csv("", "exact_poles.csv", &pole_rows(&located))?;
    let agree = listed.len() == located.len()
        && listed.iter().zip(&located).all(|(a, b)| a.1 == b.1 && (a.0 - b.0).abs() <= 1e-8 * a.0.abs().max(1.0));
    let mut noninteracting = None;
    let model = cx.cfg.grid_model()?;
    if matches!(model.kernel, InteractionKernel::Zero) && model.xc.is_none() {
        // With w = 0 the exact poles are the one-body transitions out of the
        // two occupied orbitals into every other orbital.
        let mut full = model.clone();
        full.n_virtual = full.grid.n_points - 2;
        let reference = chi0_pole_table(&full.build().map_err(lib("model"))?.model.table);
        let top = if spec.n_states() < spec.basis.dim() { spec.excitations().last().copied().unwrap_or(0.0) } else { f64::INFINITY };
        let below = |p: &&(f64, usize)| p.0 < top - group_tol;
        let a: Vec<&(f64, usize)> = listed.iter().filter(below).collect();
        let b: Vec<&(f64, usize)> = reference.iter().filter(below).collect();
        noninteracting = Some(a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.1 == y.1 && (x.0 - y.0).abs() <= 1e-8));
    }
    cx.out.json(
        "",
        "exact_mb.json",
        &json!({
            "ground_energy": e0,
            "gap": spec.gap,
            "n_states": spec.n_states(),
            "basis_dim": spec.basis.dim(),
            "missing_weight": spec.missing_weight,
            "orthonormality_residual": spec.orthonormality_residual,
            "listed_poles": listed,
            "located_poles": located,
            "non_interacting_limit": noninteracting,
        }),
    )?;
    cx.check("pole_list_agreement", agree);
    if let Some(ok) = noninteracting {
        cx.check("non_interacting_limit", ok);
    }
    Ok(())
}
