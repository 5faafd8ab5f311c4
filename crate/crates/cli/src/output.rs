//! Output directory handling and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, RunConfig};

pub struct Writer {
    pub dir: PathBuf,
    csv: bool,
    json: bool,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, cfg: Option<&RunConfig>) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        let (csv, json) = cfg.map_or((true, true), |c| (c.wants(Format::Csv), c.wants(Format::Json)));
        Ok(Self { dir: dir.to_path_buf(), csv, json, written: Vec::new() })
    }

    fn path(&mut self, prefix: &str, name: &str) -> std::io::Result<PathBuf> {
        let dir = if prefix.is_empty() { self.dir.clone() } else { self.dir.join(prefix) };
        fs::create_dir_all(&dir)?;
        Ok(dir.join(name))
    }

    pub fn csv(&mut self, prefix: &str, name: &str, body: &str) -> std::io::Result<()> {
        if self.csv {
            let p = self.path(prefix, name)?;
            fs::write(&p, body)?;
            self.written.push(p);
        }
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, prefix: &str, name: &str, value: &T) -> std::io::Result<()> {
        if self.json {
            let p = self.path(prefix, name)?;
            fs::write(&p, serde_json::to_string_pretty(value).map_err(std::io::Error::other)?)?;
            self.written.push(p);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: Option<RunConfig>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub timings: Vec<Timing>,
    pub tolerances: BTreeMap<String, f64>,
    pub properties: Vec<PropertyResult>,
    pub outputs: Vec<PathBuf>,
    pub exit_code: i32,
    pub error: Option<String>,
}

pub fn library_tolerances() -> BTreeMap<String, f64> {
    use ddrf::{dyson, exact, kernels, poles, response};
    let mut t = BTreeMap::new();
    for (k, v) in [
        ("rank_tol", response::RANK_TOL),
        ("pole_guard", response::POLE_GUARD),
        ("psd_tol", kernels::PSD_TOL),
        ("unit_eigenvalue_tol", poles::UNIT_EIG_TOL),
        ("merge_tol", poles::MERGE_TOL),
        ("bisection_rtol", poles::BISECTION_RTOL),
        ("agreement_tol", poles::AGREEMENT_TOL),
        ("monotone_tol", poles::MONOTONE_TOL),
        ("casida_cluster_tol", poles::CLUSTER_TOL),
        ("contour_quadrature_tol", poles::QUADRATURE_TOL),
        ("contour_rank_tol", poles::RESIDUE_RANK_TOL),
        ("dyson_resolution_limit", dyson::RESOLUTION_LIMIT),
        ("fourier_tail_decades", dyson::TAIL_DECADES),
        ("tdse_step_limit", exact::STEP_LIMIT),
        ("tdse_norm_drift_tol", exact::NORM_DRIFT_TOL),
        ("exact_bright_tol", exact::BRIGHT_TOL),
        ("exact_truncation_tol", exact::TRUNCATION_TOL),
    ] {
        t.insert(k.to_string(), v);
    }
    t
}
