//! Experiment runner for the semi-discrete integrators: reads flat configs,
//! writes CSV tables and SVG plots.

pub mod config;
pub mod error;
pub mod experiments;
pub mod figures;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{Experiment, ExperimentConfig, RawConfig};
pub use error::CliError;
pub use experiments::{run, Artifact, RunOutput};

/// Default output directory when neither `--out` nor the config sets one.
pub const OUT_DIR_ENV: &str = "SDSIM_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "results";

/// Applies `--set` overrides and `--seed`, then validates.
pub fn load_config(
    mut raw: RawConfig,
    experiment: Experiment,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<ExperimentConfig, CliError> {
    for o in overrides {
        raw.set(o)?;
    }
    if let Some(s) = seed {
        raw.set(&format!("seed={s}"))?;
    }
    ExperimentConfig::from_raw(&raw, experiment)
}

pub fn read_config(path: &Path) -> Result<RawConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Parse {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    RawConfig::parse(&text)
}

/// Flag, then config, then environment, then [`DEFAULT_OUT_DIR`].
pub fn resolve_out_dir(flag: Option<PathBuf>, config: Option<&Path>) -> PathBuf {
    flag.or_else(|| config.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn write_artifacts(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    out.artifacts
        .iter()
        .map(|a| {
            let path = dir.join(&a.file_name);
            fs::write(&path, &a.contents)?;
            Ok(path)
        })
        .collect()
}
