//! The `make-figures` suite: trajectory overlays at three step sizes and the
//! TEM minus LSD differences, driven by the shipped configs.

use crate::config::{Experiment, RawConfig};
use crate::error::CliError;
use crate::experiments::{run, RunOutput};
use crate::load_config;

pub const FIGURE_CONFIGS: &[(&str, &str)] = &[
    (
        "fig1_trajectories.conf",
        include_str!("../configs/fig1_trajectories.conf"),
    ),
    (
        "fig2_trajectories.conf",
        include_str!("../configs/fig2_trajectories.conf"),
    ),
    (
        "fig3_trajectories.conf",
        include_str!("../configs/fig3_trajectories.conf"),
    ),
    (
        "fig4_difference.conf",
        include_str!("../configs/fig4_difference.conf"),
    ),
];

/// Runs every figure config, applying `seed` when given.
pub fn make_figures(seed: Option<u64>) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    for (file, text) in FIGURE_CONFIGS {
        let raw = RawConfig::parse(text).map_err(|e| CliError::Runtime(format!("{file}: {e}")))?;
        let cfg = load_config(raw, Experiment::Trajectories, &[], seed)?;
        out.extend(run(&cfg)?);
    }
    Ok(out)
}
