//! `ddrf`: batch front end for the response-function library.
//!
//! Every invocation reads one JSON config, writes its artifacts into the
//! output directory and always leaves a `manifest.json` there, including
//! on failure. Exit codes: 0 success, 1 property failure, 2 config error,
//! 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::error;

use commands::{Context, Failure};
use config::{ConfigError, RunConfig};
use output::{library_tolerances, RunManifest, Timing, Writer};

#[derive(Parser, Debug)]
#[command(name = "ddrf", version, about = "Density response functions, RPA poles and exact two-fermion checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `outputs.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized property checks; overrides `properties.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the global rayon pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// One-body eigenvalues and orbitals of a grid model.
    Spectrum,
    /// Pole table of the reference response.
    Chi0Poles,
    /// Poles of the RPA response, eigencurves and optional property checks.
    RpaPoles,
    /// Cumulative pole-rank comparison between reference and RPA responses.
    ShiftReport,
    /// Time-domain Dyson solve and its residual.
    Dyson,
    /// Fourier transform of the time-domain solution against the frequency-domain response.
    FourierCheck,
    /// Linear-response check of the exact two-fermion propagation.
    Kubo,
    /// Exact two-fermion spectrum and pole table.
    ExactMb,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Chi0Poles => "chi0-poles",
            Command::RpaPoles => "rpa-poles",
            Command::ShiftReport => "shift-report",
            Command::Dyson => "dyson",
            Command::FourierCheck => "fourier-check",
            Command::Kubo => "kubo",
            Command::ExactMb => "exact-mb",
        }
    }

    fn run(self, cx: &mut Context) -> Result<(), Failure> {
        match self {
            Command::Spectrum => commands::spectrum(cx),
            Command::Chi0Poles => commands::chi0_poles(cx),
            Command::RpaPoles => commands::rpa_poles(cx),
            Command::ShiftReport => commands::shift_report(cx),
            Command::Dyson => commands::dyson(cx),
            Command::FourierCheck => commands::fourier_check(cx),
            Command::Kubo => commands::kubo(cx),
            Command::ExactMb => commands::exact_mb(cx),
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let path = cli.config.as_ref().ok_or_else(|| ConfigError::new("--config", "a config file is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let (Some(seed), Some(p)) = (cli.seed, cfg.properties.as_mut()) {
        p.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let start = Instant::now();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("thread pool: {e}");
        }
    }
    let loaded = load(&cli);
    let cfg = loaded.as_ref().ok();
    let dir = cli.out.clone().or_else(|| cfg.and_then(|c| c.outputs.directory.clone())).unwrap_or_else(|| PathBuf::from("ddrf-out"));
    let writer = match Writer::new(&dir, cfg) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: output directory {}: {e}", dir.display());
            return ExitCode::from(3);
        }
    };

    let (code, err, cx_parts) = match &loaded {
        Err(e) => (2, Some(e.to_string()), (Vec::new(), Vec::new(), Vec::new())),
        Ok(cfg) => {
            let mut cx = Context::new(cfg, writer);
            let result = cli.command.run(&mut cx);
            let code = match &result {
                Err(f) => f.exit_code(),
                Ok(()) if cx.properties.iter().all(|p| p.passed) => 0,
                Ok(()) => 1,
            };
            (code, result.err().map(|f| f.to_string()), (cx.timings, cx.properties, cx.out.written))
        }
    };
    let (mut timings, properties, outputs) = cx_parts;
    timings.push(Timing { stage: "total".into(), seconds: start.elapsed().as_secs_f64() });
    if let Some(e) = &err {
        eprintln!("error: {e}");
    }
    for p in properties.iter().filter(|p| !p.passed) {
        eprintln!("property failed: {}", p.name);
    }
    let manifest = RunManifest {
        artifact: "run_manifest",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name().to_string(),
        config: cfg.cloned(),
        seed: cfg.and_then(|c| c.properties.as_ref().map(|p| p.seed)),
        threads: Some(cli.threads.unwrap_or_else(rayon::current_num_threads)),
        timings,
        tolerances: library_tolerances(),
        properties,
        outputs,
        exit_code: code,
        error: err,
    };
    let path = dir.join("manifest.json");
    match serde_json::to_string_pretty(&manifest) {
        Ok(text) => {
            if let Err(e) = std::fs::write(&path, text) {
                eprintln!("error: writing {}: {e}", path.display());
                return ExitCode::from(3);
            }
        }
        Err(e) => {
            eprintln!("error: serializing manifest: {e}");
            return ExitCode::from(3);
        }
    }
    ExitCode::from(code as u8)
}
