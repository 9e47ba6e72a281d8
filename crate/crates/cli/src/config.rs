//! Run configuration: a TOML file mirroring `PipelineConfig` plus an `[eval]`
//! table, with dotted-key overrides from the command line.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ragseg::eval::BoundaryMode;
use ragseg::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Boundary match tolerance in pixels.
    pub tol: f64,
    pub boundary_mode: BoundaryMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tol: 2.0,
            boundary_mode: BoundaryMode::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if !(self.eval.tol >= 0.0) {
            bail!("eval.tol must be non-negative");
        }
        Ok(())
    }

    /// Returns a copy with `key` (dotted path, e.g. `similarity.a`) set to
    /// `value`. A few short aliases are accepted: `a`, `sigma`, `tol`,
    /// `initializer`.
    pub fn with(&self, key: &str, value: &str) -> Result<Self> {
        let mut next = self.clone();
        match key {
            "initializer" => {
                next.pipeline.initializer = ragseg::pipeline::Initializer::from_name(value)?;
                next.validate()?;
                return Ok(next);
            }
            "algorithm" => {
                next.pipeline.algorithm = value.parse()?;
                return Ok(next);
            }
            _ => {}
        }
        let path = match key {
            "a" => "similarity.a",
            "sigma" => "similarity.sigma",
            "tol" => "eval.tol",
            other => other,
        };
        let mut tree = toml::Value::try_from(self).context("config is not representable as TOML")?;
        let mut slot = &mut tree;
        for part in path.split('.') {
            slot = slot
                .as_table_mut()
                .and_then(|t| t.get_mut(part))
                .with_context(|| format!("unknown config key {key:?}"))?;
        }
        *slot = parse_value(value, slot)?;
        next = tree.try_into().with_context(|| format!("invalid value {value:?} for {key}"))?;
        next.validate().with_context(|| format!("invalid value {value:?} for {key}"))?;
        Ok(next)
    }
}

/// Parses `text` as a TOML value of the same kind as `current`. Bare words
/// become strings.
fn parse_value(text: &str, current: &toml::Value) -> Result<toml::Value> {
    let parsed = match current {
        toml::Value::Integer(_) => text.parse::<i64>().map(toml::Value::Integer).ok(),
        toml::Value::Float(_) => text.parse::<f64>().map(toml::Value::Float).ok(),
        toml::Value::Boolean(_) => text.parse::<bool>().map(toml::Value::Boolean).ok(),
        toml::Value::String(_) => Some(toml::Value::String(text.to_string())),
        _ => {
            let doc: Option<toml::Table> = format!("v = {text}").parse().ok();
            doc.and_then(|mut t| t.remove("v"))
        }
    };
    parsed.with_context(|| format!("cannot parse {text:?} as {}", current.type_str()))
}

/// A `--sweep param=v1,v2,...` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<String>,
}

impl Sweep {
    pub fn parse(spec: &str) -> Result<Self> {
        let (param, values) = spec.split_once('=').context("sweep must look like param=v1,v2,...")?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if param.trim().is_empty() || values.is_empty() {
            bail!("sweep must look like param=v1,v2,...");
        }
        Ok(Self {
            param: param.trim().to_string(),
            values,
        })
    }

    /// One configuration per value, validated up front.
    pub fn configs(&self, base: &RunConfig) -> Result<Vec<(String, RunConfig)>> {
        self.values
            .iter()
            .map(|v| Ok((format!("{}={v}", self.param), base.with(&self.param, v)?)))
            .collect()
    }
}
