//! Per-command JSON configs. Unknown keys are rejected everywhere; paths
//! are kept as written and resolved against the config file's directory.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use modekit::experiment::Method;
use modekit::mvgpr::TrainConfig;
use modekit::spod::Window;
use modekit::synth::SynthSpec;
use modekit::{io, Error, Result};

pub const SCHEMA: u32 = 1;

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

fn one_percent() -> f64 {
    0.01
}

fn ten() -> u64 {
    10
}

/// Reads a config file, reporting JSON syntax errors with line and column.
pub fn load_config(path: &Path) -> Result<(Value, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value: Value = io::parse_json(path, &text)?;
    Ok((value, text))
}

pub fn parse<T: DeserializeOwned>(path: &Path, value: &Value) -> Result<T> {
    match value.get("schema") {
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA as u64) => {}
        Some(other) => {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported schema {other}, expected {SCHEMA}",
                path.display()
            )))
        }
        None => {
            return Err(Error::InvalidInput(format!(
                "{}: missing \"schema\": {SCHEMA}",
                path.display()
            )))
        }
    }
    serde_json::from_value(value.clone()).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[allow(dead_code)]
    pub schema: u32,
    #[serde(default)]
    pub spec: SynthSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA,
            spec: SynthSpec::default(),
        }
    }
}

/// One snapshot per CSV row, one spatial value per column; consecutive
/// blocks of `snapshots_per_realization` rows form the realizations.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportConfig {
    #[allow(dead_code)]
    pub schema: u32,
    pub input: String,
    pub format: String,
    pub dt: f64,
    #[serde(default)]
    pub snapshots_per_realization: Option<usize>,
    #[serde(default)]
    pub spatial_shape: Option<Vec<usize>>,
    #[serde(default = "one")]
    pub field_dim: usize,
    #[serde(default)]
    pub has_header: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodConfig {
    #[allow(dead_code)]
    pub schema: u32,
    pub dataset: String,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub energy_target: Option<f64>,
    #[serde(default = "yes")]
    pub center: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsampleConfig {
    #[allow(dead_code)]
    pub schema: u32,
    pub dataset: String,
    pub fraction: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpConfig {
    #[allow(dead_code)]
    pub schema: u32,
    pub dataset: String,
    pub dt: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmdConfig {
    #[allow(dead_code)]
    pub schema: u32,
    pub dataset: String,
    #[serde(default)]
    pub rank: Option<usize>,
    /// POD basis directory; modes are lifted to the full field when given.
    #[serde(default)]
    pub basis: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpodConfig {
    #[allow(dead_code)]
    pub schema: u32,
    pub dataset: String,
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub basis: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvgprConfig {
    #[allow(dead_code)]
    pub schema: u32,
    pub dataset: String,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub basis: Option<String>,
    /// Relative frequency tolerance when grouping pairs for ranking.
    #[serde(default = "one_percent")]
    pub group_rel_tol: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    #[allow(dead_code)]
    pub schema: u32,
    /// Output directory of `mvgpr-train`.
    pub model: String,
    /// Dataset whose realizations supply the anchors (first snapshot).
    pub anchors: String,
    /// Query lags; the anchor realization's own times when absent, in which
    /// case NRMSE against its snapshots is reported.
    #[serde(default)]
    pub lags: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[allow(dead_code)]
    pub schema: u32,
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default)]
    pub candidate: Option<String>,
    #[serde(default)]
    pub sweep: Option<SweepManifest>,
    #[serde(default = "one_percent")]
    pub rel_tol: f64,
    /// SPOD bin width; frequency groups also match within half a bin.
    #[serde(default)]
    pub bin_width: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    pub dataset: String,
    pub truth: String,
    pub fractions: Vec<f64>,
    #[serde(default = "ten")]
    pub n_seeds: u64,
    pub methods: Vec<Method>,
    pub pod_rank: usize,
    #[serde(default = "yes")]
    pub center: bool,
    #[serde(default)]
    pub interp_dt: Option<f64>,
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub mvgpr: TrainConfig,
}
