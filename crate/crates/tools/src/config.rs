//! Run configuration: `key = value` pairs under `[section]` headers.
//!
//! ```toml
//! [system]
//! name = "se3-heading"
//! params = { k = 1.0, e = [0.0, 0.0, 1.0] }
//!
//! [synthesis]
//! lambda = 0.2
//! grid_size = 200
//!
//! [simulation]
//! t_end = 10.0
//! dt = 1e-3
//! period = "auto"
//! plant_seed = 3
//! reference = { x0 = [...], u = [0.1, -0.2, 0.3] }
//!
//! [output]
//! certificate = "cert.toml"
//! trace = "trace.csv"
//! ```
//!
//! Relative output and reference paths are resolved against the directory
//! of the configuration file.

use std::path::{Path, PathBuf};

use lieccm::synthesis::{
    RhoMode, SynthesisOptions, DEFAULT_A1, DEFAULT_A2, DEFAULT_KILL_TOL, DEFAULT_MARGIN,
};
use lieccm::systems::BuiltinSystem;
use lieccm::{SystemParams, Vector};
use serde::Deserialize;

use crate::error::{line_of, one_line, read_file, Result, ToolError};

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub synthesis: Option<SynthesisSection>,
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: String,
    #[serde(default)]
    pub params: ParamsSection,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub k: Option<f64>,
    pub e: Option<[f64; 3]>,
}

impl From<&ParamsSection> for SystemParams {
    fn from(p: &ParamsSection) -> Self {
        SystemParams { k: p.k, e: p.e }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum RhoSetting {
    #[default]
    Free,
    Zero,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub lambda: f64,
    #[serde(default)]
    pub degree: usize,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_a1")]
    pub a1: f64,
    #[serde(default = "default_a2")]
    pub a2: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_kill_tol")]
    pub kill_tol: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub rho: RhoSetting,
}

fn default_grid() -> usize {
    200
}
fn default_a1() -> f64 {
    DEFAULT_A1
}
fn default_a2() -> f64 {
    DEFAULT_A2
}
fn default_margin() -> f64 {
    DEFAULT_MARGIN
}
fn default_kill_tol() -> f64 {
    DEFAULT_KILL_TOL
}
fn default_iters() -> usize {
    2000
}
fn default_segments() -> usize {
    lieccm::controller::DEFAULT_SEGMENTS
}
fn default_checks() -> usize {
    50
}

impl SynthesisSection {
    pub fn options(&self) -> SynthesisOptions {
        SynthesisOptions {
            degree: self.degree,
            grid_size: self.grid_size,
            seed: self.seed,
            a1: self.a1,
            a2: self.a2,
            margin: self.margin,
            kill_tol: self.kill_tol,
            max_iters: self.max_iters,
            rho: match self.rho {
                RhoSetting::Free => RhoMode::Free,
                RhoSetting::Zero => RhoMode::Zero,
            },
            ..SynthesisOptions::default()
        }
    }
}

/// Sampling period: a positive number or `"auto"`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Period {
    #[default]
    Auto,
    Fixed(f64),
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Period::Fixed(v)),
            Raw::Word(w) if w == "auto" => Ok(Period::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "period must be a number or \"auto\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub period: Period,
    #[serde(default = "default_segments")]
    pub path_segments: usize,
    #[serde(default = "default_checks")]
    pub reference_checks: usize,
    /// Plant initial state; alternatively `plant_seed` draws a random point.
    pub x0: Option<Vec<f64>>,
    pub plant_seed: Option<u64>,
    pub reference: ReferenceSection,
}

/// Either a constant input from `x0` or a tabulated CSV file.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub x0: Option<Vec<f64>>,
    pub u: Option<Vec<f64>>,
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceSource {
    Constant { x0: Vector, u: Vector },
    Csv(PathBuf),
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub certificate: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub sdpa: Option<PathBuf>,
}

/// A parsed configuration together with where it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: RunConfig,
    text: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_file(path)?;
        Self::from_text(path, text)
    }

    pub fn from_text(path: &Path, text: String) -> Result<Self> {
        let config: RunConfig = toml::from_str(&text).map_err(|e| {
            let line = e.span().map(|s| line_of(&text, s.start));
            ToolError::parse(path, line, one_line(e.message()))
        })?;
        let loaded = Self {
            path: path.to_path_buf(),
            config,
            text,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    fn fail(&self, section: &str, key: &str, message: impl Into<String>) -> ToolError {
        ToolError::parse(&self.path, key_line(&self.text, section, key), message)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        BuiltinSystem::from_name(&c.system.name, &(&c.system.params).into())
            .map_err(|e| self.fail("system", "name", e.to_string()))?;
        if let Some(s) = &c.synthesis {
            let positive = [
                ("lambda", s.lambda),
                ("a1", s.a1),
                ("a2", s.a2),
                ("margin", s.margin),
                ("kill_tol", s.kill_tol),
            ];
            for (key, v) in positive {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(self.fail("synthesis", key, format!("`{key}` must be positive, got {v}")));
                }
            }
            if s.a2 < s.a1 {
                return Err(self.fail("synthesis", "a2", "`a2` must be at least `a1`"));
            }
            if s.grid_size == 0 {
                return Err(self.fail("synthesis", "grid_size", "`grid_size` must be at least 1"));
            }
            if s.degree > 2 {
                return Err(self.fail("synthesis", "degree", "`degree` must be 0, 1 or 2"));
            }
        }
        if let Some(s) = &c.simulation {
            if !(s.t_end > 0.0 && s.t_end.is_finite()) {
                return Err(self.fail("simulation", "t_end", "`t_end` must be positive"));
            }
            if !(s.dt > 0.0 && s.dt.is_finite()) {
                return Err(self.fail("simulation", "dt", "`dt` must be positive"));
            }
            if let Period::Fixed(p) = s.period {
                if !(p.is_finite() && s.dt < p) {
                    return Err(self.fail("simulation", "period", "need dt < period"));
                }
            }
            if s.path_segments == 0 {
                return Err(self.fail("simulation", "path_segments", "`path_segments` must be at least 1"));
            }
            if s.x0.is_some() == s.plant_seed.is_some() {
                return Err(self.fail("simulation", "x0", "give exactly one of `x0` and `plant_seed`"));
            }
            let r = &s.reference;
            let constant = r.x0.is_some() && r.u.is_some();
            let partial = r.x0.is_some() != r.u.is_some();
            if partial || constant == r.csv.is_some() {
                return Err(self.fail(
                    "simulation",
                    "reference",
                    "reference needs either both `x0` and `u` or `csv`",
                ));
            }
        }
        Ok(())
    }

    pub fn system(&self) -> BuiltinSystem {
        let c = &self.config.system;
        BuiltinSystem::from_name(&c.name, &(&c.params).into()).expect("validated at load")
    }

    pub fn synthesis(&self) -> Result<&SynthesisSection> {
        self.config
            .synthesis
            .as_ref()
            .ok_or_else(|| ToolError::parse(&self.path, None, "missing [synthesis] section"))
    }

    pub fn simulation(&self) -> Result<&SimulationSection> {
        self.config
            .simulation
            .as_ref()
            .ok_or_else(|| ToolError::parse(&self.path, None, "missing [simulation] section"))
    }

    pub fn reference_source(&self) -> Result<ReferenceSource> {
        let r = &self.simulation()?.reference;
        Ok(match (&r.x0, &r.u, &r.csv) {
            (Some(x0), Some(u), None) => ReferenceSource::Constant {
                x0: Vector::from_column_slice(x0),
                u: Vector::from_column_slice(u),
            },
            (_, _, Some(p)) => ReferenceSource::Csv(self.resolve(p)),
            _ => unreachable!("validated at load"),
        })
    }

    /// Output path: an explicit override, else the configured one.
    pub fn output(&self, explicit: Option<&Path>, pick: fn(&OutputSection) -> Option<&PathBuf>) -> Option<PathBuf> {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| pick(&self.config.output).map(|p| self.resolve(p)))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        match self.path.parent() {
            Some(dir) => dir.join(p),
            None => p.to_path_buf(),
        }
    }
}

/// Line of `key = ...` inside `[section]`, or of a `section.key` table
/// header.
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = h.trim().to_string();
            if current == format!("{section}.{key}") {
                return Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    text.lines()
        .position(|l| l.trim().trim_matches(|c| c == '[' || c == ']') == section)
        .map(|i| i + 1)
}
