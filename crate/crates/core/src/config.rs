//! Experiment configuration files.
//!
//! Configs are TOML. Every table rejects unknown keys, and every value is
//! checked against the invariants of the type it feeds before anything runs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvironmentSpec, Family};
use crate::error::{Error, Result};
use crate::mc::XiMode;
use crate::rate::{CheckSettings, EstimatorConfig, GammaSource, OffsetRule};
use crate::tube::{PiecewiseLinear, TubeSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random stream in a run is derived from it.
    #[serde(default)]
    pub seed: u64,
    pub environment: EnvironmentTable,
    pub tube: TubeTable,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub gamma: GammaTable,
    #[serde(default)]
    pub fit: FitTable,
    #[serde(default)]
    pub output: OutputTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentTable {
    /// `degenerate`, `random_shift_bernoulli` or `random_mean_gaussian`.
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denominator: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default = "one")]
    pub xi_scale: f64,
    /// One realization shared by every n (prefixes of a single sequence).
    #[serde(default)]
    pub shared: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeTable {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    pub g: Vec<(f64, f64)>,
    pub h: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_n: Option<f64>,
    #[serde(default)]
    pub xi_mode: XiMode,
    #[serde(default)]
    pub f_offset: OffsetRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaTable {
    pub beta: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub grid: usize,
    pub replicas: usize,
    /// Where `fit` takes gamma(sigma_A / sigma_Q) from: `reference`,
    /// `estimate` or `value`.
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl Default for GammaTable {
    fn default() -> Self {
        Self { beta: vec![0.0, 0.5, 1.0], t: 8.0, dt: 1e-3, grid: 400, replicas: 8, source: "estimate".into(), value: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitTable {
    pub tolerance: f64,
}

impl Default for FitTable {
    fn default() -> Self {
        Self { tolerance: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputTable {
    pub directory: String,
    /// Any of `csv`, `json`, `svg`.
    pub formats: Vec<String>,
}

impl Default for OutputTable {
    fn default() -> Self {
        Self { directory: "tubewalk-out".into(), formats: vec!["csv".into(), "json".into()] }
    }
}

fn invalid(m: impl Into<String>) -> Error {
    Error::InvalidArgument(m.into())
}

impl EnvironmentTable {
    pub fn spec(&self) -> Result<EnvironmentSpec> {
        let extra = |keys: &[(&str, bool)]| -> Result<()> {
            for (k, present) in keys {
                if *present {
                    return Err(invalid(format!("environment.{k} does not apply to family `{}`", self.family)));
                }
            }
            Ok(())
        };
        let need = |k: &str| invalid(format!("environment.{k} is required for family `{}`", self.family));
        let family = match self.family.as_str() {
            "degenerate" => {
                extra(&[("shift", self.shift.is_some()), ("denominator", self.denominator.is_some()), ("sigma_a", self.sigma_a.is_some()), ("tau", self.tau.is_some())])?;
                Family::Degenerate { atoms: self.atoms.clone().ok_or_else(|| need("atoms"))? }
            }
            "random_shift_bernoulli" => {
                extra(&[("atoms", self.atoms.is_some()), ("sigma_a", self.sigma_a.is_some()), ("tau", self.tau.is_some())])?;
                Family::RandomShiftBernoulli {
                    shift: self.shift.ok_or_else(|| need("shift"))?,
                    denominator: self.denominator.ok_or_else(|| need("denominator"))?,
                }
            }
            "random_mean_gaussian" => {
                extra(&[("atoms", self.atoms.is_some()), ("shift", self.shift.is_some()), ("denominator", self.denominator.is_some())])?;
                Family::RandomMeanGaussian {
                    sigma_a: self.sigma_a.ok_or_else(|| need("sigma_a"))?,
                    tau: self.tau.ok_or_else(|| need("tau"))?,
                }
            }
            other => return Err(invalid(format!("unknown environment family `{other}`"))),
        };
        let spec = EnvironmentSpec { family, xi_scale: self.xi_scale };
        spec.validate()?;
        Ok(spec)
    }
}

impl TubeTable {
    pub fn n_values(&self) -> Result<Vec<usize>> {
        match (&self.n, &self.n_list) {
            (Some(_), Some(_)) => Err(invalid("tube: give either `n` or `n_list`, not both")),
            (Some(n), None) => Ok(vec![*n]),
            (None, Some(v)) if !v.is_empty() => Ok(v.clone()),
            _ => Err(invalid("tube: one of `n` or `n_list` is required")),
        }
    }

    /// Tube at the first n; callers substitute n per run.
    pub fn template(&self) -> Result<TubeSpec> {
        let n = self.n_values()?[0];
        let g = PiecewiseLinear::new(self.g.clone())?;
        let h = PiecewiseLinear::new(self.h.clone())?;
        let mut tube = TubeSpec::new(g, h, self.alpha, n)?;
        if let Some(w) = self.start_window {
            tube.start_window = w;
        }
        tube.end_window = self.end_window;
        tube.xi_threshold = self.r_n;
        self.f_offset.validate()?;
        tube.f_offset = self.f_offset.offset(n);
        tube.validate()?;
        Ok(tube)
    }
}

impl GammaTable {
    pub fn validate(&self) -> Result<()> {
        if self.beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(invalid("gamma.beta entries must be >= 0"));
        }
        if !(self.t > 0.0 && self.dt > 0.0 && self.t / self.dt >= 4.0) {
            return Err(invalid("gamma: need t > 0, dt > 0 and t/dt >= 4"));
        }
        if self.grid < 50 {
            return Err(invalid("gamma.grid must be >= 50"));
        }
        if self.replicas < 8 {
            return Err(invalid("gamma.replicas must be >= 8"));
        }
        match (self.source.as_str(), self.value) {
            ("value", None) => Err(invalid("gamma.value is required when gamma.source = \"value\"")),
            ("value", Some(_)) | ("reference", _) | ("estimate", _) => Ok(()),
            (other, _) => Err(invalid(format!("unknown gamma.source `{other}`"))),
        }
    }

    pub fn source(&self, seed: u64) -> GammaSource {
        match self.source.as_str() {
            "reference" => GammaSource::Reference,
            "value" => GammaSource::Value { gamma: self.value.unwrap_or(f64::NAN) },
            _ => GammaSource::Estimate { t: self.t, dt: self.dt, grid_points: self.grid, replicas: self.replicas, seed },
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses after applying `key=value` overrides (dotted keys, TOML values;
    /// bare words are taken as strings).
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e| invalid(format!("config: {e}")))?;
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        let cfg: Self = doc.try_into().map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed must be below 2^63"));
        }
        self.environment.spec()?;
        let tube = self.tube.template()?;
        for n in self.tube.n_values()? {
            let mut t = tube.with_n(n);
            t.f_offset = self.tube.f_offset.offset(n);
            t.validate()?;
        }
        self.gamma.validate()?;
        let e = &self.estimator;
        if e.replicas < 100 || e.particles < 100 {
            return Err(invalid("estimator: replicas and particles must be >= 100"));
        }
        if e.checkpoints == 0 || e.start_points == 0 {
            return Err(invalid("estimator: checkpoints and start_points must be >= 1"));
        }
        if e.grid_points < 50 {
            return Err(invalid("estimator.grid_points must be >= 50"));
        }
        if self.fit.tolerance.is_nan() || self.fit.tolerance <= 0.0 {
            return Err(invalid("fit.tolerance must be positive"));
        }
        for f in &self.output.formats {
            if !matches!(f.as_str(), "csv" | "json" | "svg") {
                return Err(invalid(format!("unknown output format `{f}`")));
            }
        }
        Ok(())
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig { xi_mode: self.tube.xi_mode, ..self.estimator.clone() }
    }

    pub fn check_settings(&self) -> CheckSettings {
        CheckSettings { seed: self.seed, shared_env: self.environment.shared, offset: self.tube.f_offset, tolerance: self.fit.tolerance }
    }

    /// Canonical TOML of the fully resolved config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_toml`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}

fn apply_override(doc: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov.split_once('=').ok_or_else(|| invalid(format!("override `{ov}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| invalid(format!("empty override key in `{ov}`")))?;
    let mut table = doc;
    for p in parts {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| invalid(format!("override `{key}`: `{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
