use std::path::{Path, PathBuf};

use clap::ArgMatches;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tvdar::descriptive::{CiMode, RhoMode};
use tvdar::montecarlo::Target;
use tvdar::{FitOptions, IntervalKind, KernelKind, NoiseDistribution, ParamPath};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Demean {
    /// Subtract the full-sample mean.
    Global,
    /// Subtract a trailing mean over `window` observations.
    Local,
    /// Use the values as they are.
    None,
}

/// Every option any command understands. Commands fill in the fields they
/// use with defaults and echo the result into the report, so feeding that
/// echo back through `--config` reproduces the run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demean: Option<Demean>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cold: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseDistribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Time-varying parameter functions; only settable from a file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<ParamPath>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_date: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series_out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub known_noise: Option<NoiseDistribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lags: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_mode: Option<CiMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_lag: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_mode: Option<RhoMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_values: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<Target>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface_noise: Option<NoiseDistribution>,
}

impl RunConfig {
    /// Fills the optimizer fields with defaults and returns the options.
    pub fn fit_options(&mut self) -> FitOptions {
        let d = FitOptions::default();
        FitOptions {
            starts: *self.starts.get_or_insert(d.starts),
            max_iter: *self.max_iter.get_or_insert(d.max_iter),
            tol: *self.tol.get_or_insert(d.tol),
            seed: *self.fit_seed.get_or_insert(d.seed),
            ..d
        }
    }

    pub fn out_dir(&mut self) -> PathBuf {
        self.out
            .get_or_insert_with(|| PathBuf::from("tvdar-out"))
            .clone()
    }
}

/// Reads a TOML file, or a JSON file holding either a bare configuration or
/// a report whose `metadata.config` is reused.
fn load_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value: Value = if is_json {
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        match v.pointer("/metadata/config") {
            Some(c) => c.clone(),
            None => v,
        }
    } else {
        let t: toml::Value = toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t).map_err(|e| CliError::Input(e.to_string()))?
    };
    match value {
        Value::Object(m) => Ok(m),
        _ => Err(CliError::Input(format!(
            "{}: expected a table of options",
            path.display()
        ))),
    }
}

/// Merges command-line flags with the `--config` file. Values set in both
/// places follow command-line order: a flag after `--config` wins, a flag
/// before it loses, and either way a warning names the field.
pub fn resolve<A: Serialize>(
    args: &A,
    config: Option<&Path>,
    matches: &ArgMatches,
) -> Result<RunConfig, CliError> {
    let flags = match serde_json::to_value(args).map_err(|e| CliError::Input(e.to_string()))? {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    let mut merged = match config {
        Some(p) => load_file(p)?,
        None => Map::new(),
    };
    let config_index = matches.index_of("config");
    for (key, value) in flags {
        if value.is_null() {
            continue;
        }
        match (merged.get(&key), config_index) {
            (Some(_), Some(ci)) => {
                let flag_index = matches.index_of(&key).unwrap_or(0);
                if flag_index > ci {
                    log::warn!(
                        "--{} overrides the config file value",
                        key.replace('_', "-")
                    );
                    merged.insert(key, value);
                } else {
                    log::warn!(
                        "config file value for `{key}` overrides the earlier --{}",
                        key.replace('_', "-")
                    );
                }
            }
            _ => {
                merged.insert(key, value);
            }
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Input(format!("invalid configuration: {e}")))
}

pub fn check_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<f64, CliError> {
    if v > lo && v < hi {
        Ok(v)
    } else {
        Err(CliError::Input(format!(
            "{name} must lie in ({lo}, {hi}), got {v}"
        )))
    }
}
