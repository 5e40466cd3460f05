//! Run configuration: a TOML file with defaults for every key, overridden by
//! command-line flags, validated with errors that name the offending key.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{PowerModel, Window};
use crate::error::{Error, Result};
use crate::hermite::{HermiteOrder, IcModel, IntegratorConfig};
use crate::topology::{ClusterSpec, ScalingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Oracle,
    Device,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(BackendKind::Oracle),
            "device" => Ok(BackendKind::Device),
            other => Err(Error::config("backend", format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateOptions {
    pub acc_tolerance: f64,
    pub jerk_tolerance: f64,
    pub distribution_tolerance: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            acc_tolerance: 5.0e-4,
            jerk_tolerance: 2.0e-3,
            distribution_tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchOptions {
    pub repetitions: usize,
    /// Trace files to ingest instead of synthesizing traces.
    pub traces: Vec<PathBuf>,
    /// Active window for ingested traces.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    pub power: PowerModel,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            repetitions: 3,
            traces: Vec::new(),
            window: None,
            power: PowerModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleOptions {
    pub ranks: Vec<usize>,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        ScaleOptions { ranks: vec![1, 2, 4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub particles: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub ic_model: IcModel,
    /// Snapshot to start from instead of generated initial conditions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub order: HermiteOrder,
    pub backend: BackendKind,
    pub energy_bins: usize,
    pub record_energy: bool,
    pub output_dir: PathBuf,
    pub cluster: ClusterSpec,
    pub validate: ValidateOptions,
    pub bench: BenchOptions,
    pub scale: ScaleOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            particles: 4096,
            steps: 3,
            dt: 0.01,
            seed: 42,
            ic_model: IcModel::UniformSphere,
            input: None,
            order: HermiteOrder::Hermite4,
            backend: BackendKind::Device,
            energy_bins: 32,
            record_energy: true,
            output_dir: PathBuf::from("out"),
            cluster: ClusterSpec::default(),
            validate: ValidateOptions::default(),
            bench: BenchOptions::default(),
            scale: ScaleOptions::default(),
        }
    }
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub particles: Option<usize>,
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<ScalingMode>,
    pub cards: Option<usize>,
    pub chips_per_card: Option<usize>,
    pub cores: Option<usize>,
    pub backend: Option<BackendKind>,
    pub output_dir: Option<PathBuf>,
}

/// Turns a TOML error into a config error naming the key it points at.
pub(crate) fn toml_error(text: &str, e: &toml::de::Error, prefix: &str) -> Error {
    let key = e
        .span()
        .and_then(|span| key_at(text, span.start))
        .or_else(|| crate::topology::first_key(e.message()))
        .unwrap_or_else(|| "config".into());
    let key = match prefix {
        "" => key,
        p => format!("{p}.{key}"),
    };
    Error::config(&key, e.message().trim())
}

fn key_at(text: &str, offset: usize) -> Option<String> {
    let offset = offset.min(text.len());
    let line_start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[offset..].find('\n').map_or(text.len(), |i| offset + i);
    let line = text[line_start..line_end].trim();
    let table = |l: &str| l.trim_start_matches('[').trim_end_matches(']').trim().to_string();
    if line.starts_with('[') {
        return Some(table(line));
    }
    let key = line.split('=').next()?.trim().trim_matches('"').to_string();
    if key.is_empty() {
        return None;
    }
    let section = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(table);
    Some(match section {
        Some(s) => format!("{s}.{key}"),
        None => key,
    })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| toml_error(text, &e, ""))
    }

    /// Reads `path` (or starts from defaults), applies `overrides`, validates.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Error::config("config", format!("cannot read {}: {e}", p.display()))
                })?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.particles {
            self.particles = v;
        }
        if let Some(v) = o.steps {
            self.steps = v;
        }
        if let Some(v) = o.dt {
            self.dt = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.mode {
            self.cluster.mode = v;
            if o.chips_per_card.is_none() {
                self.cluster.chips_per_card = None;
            }
        }
        if let Some(v) = o.cards {
            self.cluster.cards = v;
        }
        if let Some(v) = o.chips_per_card {
            self.cluster.chips_per_card = Some(v);
        }
        if let Some(v) = o.cores {
            self.cluster.cores_per_chip = v;
        }
        if let Some(v) = o.backend {
            self.backend = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 && self.input.is_none() {
            return Err(Error::config("particles", "must be >= 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be > 0"));
        }
        if self.energy_bins == 0 {
            return Err(Error::config("energy_bins", "must be >= 1"));
        }
        if let Some(p) = &self.input {
            if !p.is_file() {
                return Err(Error::config("input", format!("{} does not exist", p.display())));
            }
        }
        self.cluster.validate().map_err(|e| match e {
            Error::Config { key, msg } => Error::Config {
                key: format!("cluster.{key}"),
                msg,
            },
            other => other,
        })?;
        if self.order == HermiteOrder::Hermite6 && self.backend == BackendKind::Device {
            return Err(Error::config(
                "order",
                "hermite6 needs snap, which only the oracle backend evaluates",
            ));
        }
        let v = &self.validate;
        for (k, t) in [
            ("acc_tolerance", v.acc_tolerance),
            ("jerk_tolerance", v.jerk_tolerance),
            ("distribution_tolerance", v.distribution_tolerance),
        ] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config(&format!("validate.{k}"), "must be > 0"));
            }
        }
        if self.bench.repetitions == 0 {
            return Err(Error::config("bench.repetitions", "must be >= 1"));
        }
        for p in &self.bench.traces {
            if !p.is_file() {
                return Err(Error::config("bench.traces", format!("{} does not exist", p.display())));
            }
        }
        if !self.bench.traces.is_empty() && self.bench.window.is_none() {
            return Err(Error::config("bench.window", "required when ingesting traces"));
        }
        if let Some(w) = &self.bench.window {
            if !(w.start < w.end) {
                return Err(Error::config("bench.window", "start must precede end"));
            }
        }
        self.bench.power.validate()?;
        if self.scale.ranks.is_empty() || self.scale.ranks.contains(&0) {
            return Err(Error::config("scale.ranks", "must be a non-empty list of positive counts"));
        }
        if !self.scale.ranks.contains(&1) {
            return Err(Error::config("scale.ranks", "must include the 1-rank baseline"));
        }
        Ok(())
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            steps: self.steps,
            order: self.order,
            softening: self.cluster.softening,
            record_energy: self.record_energy,
        }
    }

    /// The effective configuration with implied values filled in.
    pub fn to_toml(&self) -> String {
        let mut resolved = self.clone();
        resolved.cluster = resolved.cluster.resolved();
        toml::to_string(&resolved).expect("config serializes")
    }
}

/// Writes `contents` to `path` through a temporary file and a rename, so the
/// file is either complete or absent.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}
