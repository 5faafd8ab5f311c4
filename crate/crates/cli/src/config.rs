//! Run configuration: one JSON document per invocation.

use std::fs;
use std::path::{Path, PathBuf};

use ddrf::dyson::VolterraConfig;
use ddrf::exact::{TimeProfile, DEFAULT_DIM_CAP, DEFAULT_GAP_TOL};
use ddrf::grid::UniformGrid;
use ddrf::poles::{PropertyConfig, ScanConfig};
use ddrf::response::DEFAULT_GROUP_TOL;
use ddrf::suite::ModelConfig;
use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Malformed or inconsistent configuration, reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.message)
    }
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub omega: f64,
    pub beta: f64,
    pub g: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub solver: VolterraConfig,
    /// Solve on the full grid instead of the reduced transition space.
    #[serde(default)]
    pub full: bool,
}

fn default_fourier_tol() -> f64 {
    1e-6
}

fn default_residual_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierConfig {
    /// Evaluation points as `[re, im]`.
    pub points: Vec<[f64; 2]>,
    #[serde(default = "default_fourier_tol")]
    pub tol: f64,
}

impl FourierConfig {
    pub fn points(&self) -> Vec<Complex64> {
        self.points.iter().map(|p| Complex64::new(p[0], p[1])).collect()
    }
}

/// One-body potential used as probe or observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Probe {
    Position,
    Harmonic { k: f64 },
    Tabulated { values: Vec<f64> },
}

impl Probe {
    pub fn sample(&self, grid: &UniformGrid, field: &str) -> Result<DVector<f64>, ConfigError> {
        match self {
            Probe::Position => Ok(DVector::from_vec(grid.points())),
            Probe::Harmonic { k } => Ok(grid.sample(|x| 0.5 * k * x * x)),
            Probe::Tabulated { values } if values.len() == grid.len() => Ok(DVector::from_column_slice(values)),
            Probe::Tabulated { values } => Err(ConfigError::new(field, format!("{} values for {} grid points", values.len(), grid.len()))),
        }
    }
}

fn default_dim_cap() -> usize {
    DEFAULT_DIM_CAP
}

fn default_mb_gap_tol() -> f64 {
    DEFAULT_GAP_TOL
}

fn default_group_tol() -> f64 {
    DEFAULT_GROUP_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactConfig {
    /// Retained many-body states; all of them when absent.
    #[serde(default)]
    pub n_states: Option<usize>,
    #[serde(default = "default_dim_cap")]
    pub dim_cap: usize,
    #[serde(default = "default_mb_gap_tol")]
    pub gap_tol: f64,
    #[serde(default = "default_group_tol")]
    pub group_tol: f64,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self { n_states: None, dim_cap: DEFAULT_DIM_CAP, gap_tol: DEFAULT_GAP_TOL, group_tol: DEFAULT_GROUP_TOL }
    }
}

fn default_epsilons() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3]
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KuboConfig {
    pub probe: Probe,
    pub observable: Probe,
    pub profile: TimeProfile,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "one")]
    pub record_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: None, formats: default_formats() }
    }
}

/// Exactly one of `model`, `toy` or `suite` selects what is analysed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub toy: Option<ToyConfig>,
    /// `"bundled"` runs over the ten bundled models.
    #[serde(default)]
    pub suite: Option<String>,
    #[serde(default)]
    pub time: Option<TimeConfig>,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub properties: Option<PropertyConfig>,
    #[serde(default)]
    pub fourier: Option<FourierConfig>,
    #[serde(default)]
    pub kubo: Option<KuboConfig>,
    #[serde(default)]
    pub exact: ExactConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default = "default_residual_tol")]
    pub dyson_residual_tol: f64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            ConfigError::new(if field == "." { "<root>".to_string() } else { field }, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let chosen = [self.model.is_some(), self.toy.is_some(), self.suite.is_some()].iter().filter(|&&b| b).count();
        if chosen != 1 {
            return Err(ConfigError::new("model", "exactly one of `model`, `toy`, `suite` must be given"));
        }
        if let Some(s) = &self.suite {
            if s != "bundled" {
                return Err(ConfigError::new("suite", format!("unknown suite {s:?}; only \"bundled\" exists")));
            }
        }
        if let Some(m) = &self.model {
            if !(m.group_tol >= 0.0) {
                return Err(ConfigError::new("model.group_tol", "must be >= 0"));
            }
            if !(m.gap_tol > 0.0) {
                return Err(ConfigError::new("model.gap_tol", "must be > 0"));
            }
        }
        if let Some(t) = &self.toy {
            if !(t.omega > 0.0) {
                return Err(ConfigError::new("toy.omega", "must be > 0"));
            }
            if !(t.beta > 0.0) {
                return Err(ConfigError::new("toy.beta", "must be > 0"));
            }
        }
        if let Some(t) = &self.time {
            if !(t.dt > 0.0) {
                return Err(ConfigError::new("time.dt", "must be > 0"));
            }
            if !(t.t_final >= t.dt) {
                return Err(ConfigError::new("time.t_final", "must be >= time.dt"));
            }
            if !(t.solver.tol > 0.0) {
                return Err(ConfigError::new("time.solver.tol", "must be > 0"));
            }
        }
        if !(self.scan.padding > 0.0) {
            return Err(ConfigError::new("scan.padding", "must be > 0"));
        }
        if self.scan.n_samples < 2 {
            return Err(ConfigError::new("scan.n_samples", "must be >= 2"));
        }
        if let Some(p) = &self.properties {
            for (name, v) in [
                ("ratio_slack", p.ratio_slack),
                ("blowup_factor", p.blowup_factor),
                ("nsd_tol", p.nsd_tol),
                ("annihilation_tol", p.annihilation_tol),
                ("max_radius", p.max_radius),
            ] {
                if !(v > 0.0) {
                    return Err(ConfigError::new(format!("properties.{name}"), "must be > 0"));
                }
            }
        }
        if let Some(f) = &self.fourier {
            if f.points.is_empty() {
                return Err(ConfigError::new("fourier.points", "at least one point is required"));
            }
            if !(f.tol > 0.0) {
                return Err(ConfigError::new("fourier.tol", "must be > 0"));
            }
        }
        if let Some(k) = &self.kubo {
            if !(k.dt > 0.0) {
                return Err(ConfigError::new("kubo.dt", "must be > 0"));
            }
            if k.epsilons.is_empty() {
                return Err(ConfigError::new("kubo.epsilons", "at least one amplitude is required"));
            }
            if k.record_every == 0 {
                return Err(ConfigError::new("kubo.record_every", "must be >= 1"));
            }
        }
        if !(self.dyson_residual_tol > 0.0) {
            return Err(ConfigError::new("dyson_residual_tol", "must be > 0"));
        }
        Ok(())
    }

    pub fn time(&self) -> Result<&TimeConfig, ConfigError> {
        self.time.as_ref().ok_or_else(|| ConfigError::new("time", "required by this subcommand"))
    }

    pub fn grid_model(&self) -> Result<&ModelConfig, ConfigError> {
        self.model.as_ref().ok_or_else(|| ConfigError::new("model", "this subcommand needs a grid model"))
    }

    pub fn wants(&self, f: Format) -> bool {
        self.outputs.formats.contains(&f)
    }
}
