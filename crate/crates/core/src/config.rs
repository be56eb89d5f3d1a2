//! Run configuration: TOML (or JSON) file, dotted-key overrides, validation.
//!
//! Every section except `estate` may be omitted. The estate section names a
//! preset and may override any of its fields:
//!
//! ```toml
//! [engine]
//! T = 20
//!
//! [estate]
//! preset = "flaky-build"
//! counts = { code = 24 }
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::bandit::{BanditError, BanditState};
use crate::engine::{EngineConfig, EngineError, RunSettings};
use crate::metrics::NormalizationBounds;
use crate::operators::OperatorConfig;
use crate::safety::{SafetyError, SafetyPolicy};
use crate::selection::{SelectionParams, DEFAULT_CAPACITY, DEFAULT_K};
use crate::simenv::{EstatePreset, EstateSpec, SimEnvError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: cannot read: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: `{field}`: {message}")]
    Field { path: String, field: String, message: String },
    #[error("bad override `{0}`: expected key.path=value")]
    Override(String),
}

impl ConfigError {
    /// Dotted path of the offending field, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Field { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub alpha_sel: f64,
    pub beta_nov: f64,
    /// Archive capacity.
    pub capacity: usize,
    /// Novelty neighbours.
    pub k: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        let p = SelectionParams::default();
        Self { alpha_sel: p.alpha_sel, beta_nov: p.beta_nov, capacity: DEFAULT_CAPACITY, k: DEFAULT_K }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstateConfig {
    pub preset: EstatePreset,
    /// Estate seed; the engine seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// The preset's spec with the file's overrides applied.
    pub spec: EstateSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub metrics: String,
    pub events: String,
    pub archive: String,
    pub config: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            metrics: "metrics.csv".into(),
            events: "events.jsonl".into(),
            archive: "archive.json".into(),
            config: "effective-config.toml".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub operators: OperatorConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub bandit: BanditState,
    #[serde(default)]
    pub safety: SafetyPolicy,
    /// Latency normalization bounds.
    #[serde(default)]
    pub metrics: NormalizationBounds,
    pub estate: EstateConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Reads `path`, applies `overrides` (`key.path=value`), checks every field.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, is_json, &path.display().to_string(), overrides)
    }

    /// Parses configuration text; `origin` labels error messages.
    pub fn parse(text: &str, is_json: bool, origin: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let parse_err = |message: String| ConfigError::Parse { path: origin.to_string(), message };
        let mut tree: Value = if is_json {
            serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?
        } else {
            let table: toml::Table = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
            serde_json::to_value(table).map_err(|e| parse_err(e.to_string()))?
        };
        if !tree.is_object() {
            return Err(parse_err("top level must be a table".into()));
        }
        for item in overrides {
            apply_override(&mut tree, item)?;
        }
        Self::from_tree(tree, origin)
    }

    /// Parsed configuration from an already-built value tree.
    pub fn from_tree(mut tree: Value, origin: &str) -> Result<Self, ConfigError> {
        let field_err =
            |field: String, message: String| ConfigError::Field { path: origin.to_string(), field, message };
        let root = tree.as_object_mut().ok_or_else(|| field_err("(root)".into(), "must be a table".into()))?;
        let estate = root.remove("estate").ok_or_else(|| field_err("estate".into(), "missing section".into()))?;
        root.insert("estate".into(), resolve_estate(estate).map_err(|(f, m)| field_err(f, m))?);

        let config: RunConfig = serde_path_to_error::deserialize(tree).map_err(|e| {
            let field = e.path().to_string().replacen("estate.spec.", "estate.", 1);
            field_err(field, e.into_inner().to_string())
        })?;
        config.validate().map_err(|(f, m)| field_err(f, m))?;
        Ok(config)
    }

    /// Cross-field checks; returns `(dotted field, message)` for the first failure.
    pub fn validate(&self) -> Result<(), (String, String)> {
        self.engine.validate().map_err(|e| match e {
            EngineError::InvalidConfig { field, message } => (format!("engine.{field}"), message),
            other => ("engine.events".to_string(), other.to_string()),
        })?;
        self.operators.validate().map_err(|(f, m)| (format!("operators.{f}"), m))?;
        self.selection_params().validate().map_err(|e| ("selection".to_string(), e.to_string()))?;
        if self.selection.capacity == 0 || self.selection.k == 0 {
            return Err(("selection".into(), "capacity and k must be at least 1".into()));
        }
        self.bandit.validate().map_err(|e| {
            let field = if matches!(e, BanditError::InvalidLearningRate(_)) { "bandit.eta" } else { "bandit.w" };
            (field.to_string(), e.to_string())
        })?;
        self.safety.validate().map_err(|e| match e {
            SafetyError::InvalidPolicy { field, message } => (format!("safety.{field}"), message),
            other => ("safety".to_string(), other.to_string()),
        })?;
        self.metrics.validate().map_err(|e| ("metrics".to_string(), e.to_string()))?;
        self.estate.spec.validate().map_err(|e| match e {
            SimEnvError::InvalidSpec { field, message } => (format!("estate.{field}"), message),
            other => ("estate".to_string(), other.to_string()),
        })?;
        Ok(())
    }

    pub fn selection_params(&self) -> SelectionParams {
        SelectionParams { alpha_sel: self.selection.alpha_sel, beta_nov: self.selection.beta_nov }
    }

    pub fn estate_seed(&self) -> u64 {
        self.estate.seed.unwrap_or(self.engine.seed)
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            engine: self.engine.clone(),
            operators: self.operators.clone(),
            selection: self.selection_params(),
            archive_capacity: self.selection.capacity,
            archive_k: self.selection.k,
            bandit: self.bandit.clone(),
            safety: self.safety.clone(),
        }
    }

    /// The configuration with the estate written flat (preset plus every
    /// spec field), as accepted by [`RunConfig::parse`].
    pub fn to_tree(&self) -> Value {
        let mut tree = serde_json::to_value(self).expect("config serializes");
        let root = tree.as_object_mut().expect("config is a table");
        if let Some(Value::Object(mut estate)) = root.remove("estate") {
            let mut flat = Map::new();
            if let Some(preset) = estate.remove("preset") {
                flat.insert("preset".into(), preset);
            }
            if let Some(seed) = estate.remove("seed") {
                flat.insert("seed".into(), seed);
            }
            if let Some(Value::Object(spec)) = estate.remove("spec") {
                flat.extend(spec);
            }
            root.insert("estate".into(), Value::Object(flat));
        }
        tree
    }

    /// Effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        let table: toml::Table = serde_json::from_value(self.to_tree()).expect("config maps onto TOML");
        toml::to_string(&table).expect("config renders as TOML")
    }

    /// A configuration that runs `preset` with every other setting at its default.
    pub fn for_preset(preset: EstatePreset) -> Self {
        Self {
            engine: EngineConfig::default(),
            operators: OperatorConfig::default(),
            selection: SelectionConfig::default(),
            bandit: BanditState::default(),
            safety: SafetyPolicy::default(),
            metrics: NormalizationBounds::default(),
            estate: EstateConfig { preset, seed: None, spec: preset.spec() },
            output: OutputConfig::default(),
        }
    }
}

/// Turns a flat `[estate]` table into `{preset, seed, spec}`, filling the
/// spec from the named preset.
fn resolve_estate(estate: Value) -> Result<Value, (String, String)> {
    let Value::Object(mut table) = estate else {
        return Err(("estate".into(), "must be a table".into()));
    };
    let preset = match table.remove("preset") {
        None => EstatePreset::Reference,
        Some(Value::String(name)) => {
            EstatePreset::from_str(&name).map_err(|e| ("estate.preset".into(), e.to_string()))?
        }
        Some(_) => return Err(("estate.preset".into(), "must be a preset name".into())),
    };
    let seed = table.remove("seed");
    let mut spec = serde_json::to_value(preset.spec()).expect("spec serializes");
    merge(&mut spec, Value::Object(table));
    let mut out = Map::new();
    out.insert("preset".into(), Value::String(preset.name().into()));
    if let Some(seed) = seed {
        out.insert("seed".into(), seed);
    }
    out.insert("spec".into(), spec);
    Ok(Value::Object(out))
}

/// Recursive table merge; non-table values in `over` replace `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses the right-hand side of an override as a TOML value; bare words
/// that are not valid TOML are taken as strings.
fn override_value(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .and_then(|v| serde_json::to_value(v).ok())
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets `key.path=value` in `tree`, creating intermediate tables.
pub fn apply_override(tree: &mut Value, item: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::Override(item.to_string());
    let (key, raw) = item.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad());
    }
    let mut node = tree;
    for part in &parts[..parts.len() - 1] {
        let table = node.as_object_mut().ok_or_else(bad)?;
        node = table.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let table = node.as_object_mut().ok_or_else(bad)?;
    table.insert(parts[parts.len() - 1].to_string(), override_value(raw.trim()));
    Ok(())
}
