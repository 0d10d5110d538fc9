//! Resolved run configuration.
//!
//! Built-in defaults are overlaid by a JSON config file (a plain settings
//! object or a previous run manifest), then by an optional params file, then
//! by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use cultabc::simulator::InitialState;
use cultabc::EmpiricalParams;

use crate::error::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Input file of the command (events for `ingest`, a frequency table otherwise).
    pub input: Option<PathBuf>,
    /// JSON params file as written by `ingest`; supplies N and μ.
    pub params: Option<PathBuf>,

    pub population_size: usize,
    pub innovation_rate: f64,
    pub warmup_steps: usize,
    pub timepoints: usize,
    pub initial: InitialState,
    pub bias: f64,
    pub y_max: usize,

    pub range_start: Option<i64>,
    pub range_end: Option<i64>,

    pub neutral_reps: usize,

    pub horizon: usize,
    pub warmup_iterations: usize,
    pub plateau_tolerance: f64,

    pub iterations: usize,
    pub tolerance: f64,
    pub prior_low: f64,
    pub prior_high: f64,
    pub gof_pseudo: Option<usize>,
    pub cv_folds: Option<usize>,
    pub cv_tolerances: Vec<f64>,

    pub n_per_model: usize,
    pub n_trees: usize,
    pub posterior_trees: usize,
    pub bootstrap_rows: Option<usize>,
    pub conformity_prior: (f64, f64),
    pub novelty_prior: (f64, f64),
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            input: None,
            params: None,
            population_size: 729,
            innovation_rate: 0.037,
            warmup_steps: 200,
            timepoints: 32,
            initial: InitialState::Distinct,
            bias: 0.0,
            y_max: 142,
            range_start: None,
            range_end: None,
            neutral_reps: 0,
            horizon: 400,
            warmup_iterations: 100,
            plateau_tolerance: 0.01,
            iterations: 10_000,
            tolerance: 0.01,
            prior_low: -0.2,
            prior_high: 0.2,
            gof_pseudo: None,
            cv_folds: None,
            cv_tolerances: vec![0.005, 0.01, 0.05],
            n_per_model: 5_000,
            n_trees: 500,
            posterior_trees: 500,
            bootstrap_rows: None,
            conformity_prior: (-0.2, 0.0),
            novelty_prior: (0.0, 0.2),
        }
    }
}

/// Contents of a `--config` file.
pub struct ConfigFile {
    pub settings: Settings,
    /// Set when the file is a run manifest.
    pub command: Option<String>,
    pub seed: Option<u64>,
}

pub fn load_config(path: &Path) -> Result<ConfigFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: invalid JSON: {e}", path.display())))?;
    let bad = |e: serde_json::Error| Failure::usage(format!("{}: {e}", path.display()));
    match value.get("schema_version") {
        Some(_) => {
            let config = value.get("config").cloned().unwrap_or(Value::Null);
            Ok(ConfigFile {
                settings: serde_json::from_value(config).map_err(bad)?,
                command: value.get("command").and_then(Value::as_str).map(str::to_owned),
                seed: value.get("seed").and_then(Value::as_u64),
            })
        }
        None => {
            let mut value = value;
            let seed = value.as_object_mut().and_then(|o| o.remove("seed"));
            let seed =
                match seed {
                    None => None,
                    Some(v) => Some(v.as_u64().ok_or_else(|| {
                        Failure::usage(format!("{}: seed must be an unsigned integer", path.display()))
                    })?),
                };
            Ok(ConfigFile {
                settings: serde_json::from_value(value).map_err(bad)?,
                command: None,
                seed,
            })
        }
    }
}

pub fn load_params(path: &Path) -> Result<EmpiricalParams, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}
