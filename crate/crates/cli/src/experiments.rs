//! Runs one validated experiment and renders its CSV and SVG outputs in
//! memory. Nothing here touches the filesystem.

use rayon::prelude::*;
use semidiscrete::analysis::{
    check_positivity, estimate_strong_order, estimate_sup_moment, run_single_path,
    run_stability_experiment, ConvergenceReport, ConvergenceSetup, PathsSetup,
};
use semidiscrete::stability::{
    check_drift_inequality, default_inequality_grid, integral_bound_check, Phi2Sampling,
};
use semidiscrete::{RngSeed, SchemeKind, TimeGrid};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::svg::{self, Series};

/// A file to be written, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    pub fn artifact(&self, file_name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.file_name == file_name)
    }

    fn push(&mut self, file_name: String, contents: impl Into<Vec<u8>>) {
        self.artifacts.push(Artifact {
            file_name,
            contents: contents.into(),
        });
    }

    fn push_svg(&mut self, file_name: String, svg: Option<String>) {
        match svg {
            Some(s) => self.push(file_name, s),
            None => self
                .warnings
                .push(format!("nothing to plot, skipped {file_name}")),
        }
    }

    pub fn extend(&mut self, other: RunOutput) {
        self.artifacts.extend(other.artifacts);
        self.warnings.extend(other.warnings);
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    num(x.unwrap_or(f64::NAN))
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

pub const TRAJECTORY_HEADER: &[&str] = &["path_id", "step", "t", "scheme", "y"];
pub const STABILITY_HEADER: &[&str] = &[
    "scheme",
    "delta",
    "T",
    "n_paths",
    "frac_below",
    "frac_diverged",
    "q50",
    "q99",
];
pub const CONVERGENCE_HEADER: &[&str] = &["scheme", "delta", "l2_error", "fitted_order", "r2"];
pub const DECOMPOSITION_HEADER: &[&str] = &[
    "scheme",
    "delta",
    "y",
    "phi1",
    "neg_kappa1",
    "holds",
    "phi2_mean",
    "phi2_stderr",
];
pub const INTEGRAL_BOUND_HEADER: &[&str] = &["c", "delta", "r", "empirical", "bound"];
pub const POSITIVITY_HEADER: &[&str] = &[
    "scheme",
    "delta",
    "T",
    "n_paths",
    "n_states",
    "n_nonpositive",
    "paths_with_violation",
    "violation_fraction",
];
pub const MOMENTS_HEADER: &[&str] = &[
    "scheme",
    "p",
    "delta",
    "T",
    "n_paths",
    "n_diverged",
    "estimate",
    "stderr",
];

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    match cfg.experiment {
        Experiment::Trajectories => trajectories(cfg),
        Experiment::Stability => stability(cfg),
        Experiment::Convergence => convergence(cfg),
        Experiment::Decomposition => decomposition(cfg),
        Experiment::IntegralBound => integral_bound(cfg),
        Experiment::Positivity => positivity(cfg),
        Experiment::Moments => moments(cfg),
    }
}

/// One simulated path: `(step, t, y)` for every finite state.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub scheme: SchemeKind,
    pub path_id: usize,
    pub states: Vec<(usize, f64, f64)>,
    pub diverged_at: Option<usize>,
}

/// Simulates `n_paths` paths of each scheme at step `delta`. Path `i` of
/// every scheme sees the same Brownian increments.
pub fn simulate_paths(cfg: &ExperimentConfig, delta: f64) -> Result<Vec<PathRecord>, CliError> {
    let grid = TimeGrid::reaching(cfg.horizon, delta)?;
    let jobs: Vec<(SchemeKind, usize)> = cfg
        .schemes
        .iter()
        .flat_map(|k| (0..cfg.n_paths).map(move |p| (*k, p)))
        .collect();
    jobs.par_iter()
        .map(|&(kind, path_id)| {
            let mut states = Vec::with_capacity(grid.n_steps() + 1);
            let outcome = run_single_path(
                &cfg.scheme(kind),
                cfg.x0,
                &grid,
                RngSeed::new(cfg.seed, path_id as u64),
                |s| states.push((s.step_index, s.t, s.y)),
            )?;
            Ok(PathRecord {
                scheme: kind,
                path_id,
                states,
                diverged_at: outcome.diverged_at,
            })
        })
        .collect()
}

fn delta_tag(delta: f64) -> String {
    format!("d{delta}")
}

fn file_stem(cfg: &ExperimentConfig, delta: f64) -> String {
    if cfg.deltas.len() == 1 {
        cfg.name.clone()
    } else {
        format!("{}_{}", cfg.name, delta_tag(delta))
    }
}

fn divergence(cfg: &ExperimentConfig, what: String, out: &mut RunOutput) -> Result<(), CliError> {
    if cfg.fail_on_divergence {
        Err(CliError::Divergence(what))
    } else {
        out.warnings.push(what);
        Ok(())
    }
}

fn trajectories(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    let mut differences = Vec::new();
    for &delta in &cfg.deltas {
        let records = simulate_paths(cfg, delta)?;
        let mut rows = Vec::new();
        for r in &records {
            if let Some(step) = r.diverged_at {
                divergence(
                    cfg,
                    format!(
                        "{} path {} diverged at step {step} (delta {delta})",
                        r.scheme, r.path_id
                    ),
                    &mut out,
                )?;
            }
            for &(step, t, y) in &r.states {
                rows.push(vec![
                    r.path_id.to_string(),
                    step.to_string(),
                    num(t),
                    r.scheme.name().to_string(),
                    num(y),
                ]);
            }
        }
        let stem = file_stem(cfg, delta);
        out.push(format!("{stem}.csv"), csv_bytes(TRAJECTORY_HEADER, &rows)?);
        if cfg.plot {
            let series: Vec<Series> = records
                .iter()
                .map(|r| Series {
                    label: if cfg.n_paths == 1 {
                        format!("{} Δ={delta}", r.scheme)
                    } else {
                        format!("{} Δ={delta} #{}", r.scheme, r.path_id)
                    },
                    points: r.states.iter().map(|&(_, t, y)| (t, y)).collect(),
                })
                .collect();
            let title = format!("Trajectories, x0 = {}, Δ = {delta}", cfg.x0);
            out.push_svg(
                format!("{stem}.svg"),
                svg::line_plot(&title, "t", "y", &series),
            );
            if let Some(d) = tem_minus_lsd(&records) {
                differences.push(Series {
                    label: format!("Δ={delta}"),
                    points: d,
                });
            }
        }
    }
    if !differences.is_empty() {
        let title = format!("TEM − LSD, x0 = {}", cfg.x0);
        out.push_svg(
            format!("{}_difference.svg", cfg.name),
            svg::line_plot(&title, "t", "y_TEM − y_LSD", &differences),
        );
    }
    Ok(out)
}

/// Step-wise TEM minus LSD on path 0, over the steps both reached.
pub fn tem_minus_lsd(records: &[PathRecord]) -> Option<Vec<(f64, f64)>> {
    let pick = |k| records.iter().find(|r| r.scheme == k && r.path_id == 0);
    let (tem, lsd) = (pick(SchemeKind::Tem)?, pick(SchemeKind::Lsd)?);
    Some(
        tem.states
            .iter()
            .zip(&lsd.states)
            .map(|(&(_, t, a), &(_, _, b))| (t, a - b))
            .collect(),
    )
}

fn stability(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    let mut rows = Vec::new();
    for &kind in &cfg.schemes {
        for &delta in &cfg.deltas {
            let setup = PathsSetup::new(
                cfg.scheme(kind),
                cfg.x0,
                delta,
                cfg.horizon,
                cfg.n_paths,
                cfg.seed,
            );
            let r = run_stability_experiment(&setup, cfg.threshold)?;
            if r.n_diverged > 0 {
                divergence(
                    cfg,
                    format!(
                        "{kind}: {} of {} paths diverged (delta {delta})",
                        r.n_diverged, r.n_paths
                    ),
                    &mut out,
                )?;
            }
            rows.push(vec![
                kind.name().to_string(),
                num(delta),
                num(cfg.horizon),
                r.n_paths.to_string(),
                opt(r.fraction_below),
                opt(r.fraction_diverged),
                opt(r.q50),
                opt(r.q99),
            ]);
        }
    }
    out.push(
        format!("{}.csv", cfg.name),
        csv_bytes(STABILITY_HEADER, &rows)?,
    );
    Ok(out)
}

pub fn convergence_reports(cfg: &ExperimentConfig) -> Result<Vec<ConvergenceReport>, CliError> {
    cfg.schemes
        .iter()
        .map(|&kind| {
            let setup = ConvergenceSetup {
                scheme: cfg.scheme(kind),
                x0: cfg.x0,
                horizon: cfg.horizon,
                deltas: cfg.deltas.clone(),
                reference_delta: cfg.reference_delta,
                n_paths: cfg.n_paths,
                seed: cfg.seed,
            };
            Ok(estimate_strong_order(&setup)?)
        })
        .collect()
}

fn convergence(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    let reports = convergence_reports(cfg)?;
    let mut rows = Vec::new();
    for r in &reports {
        if r.l2_errors.iter().any(|e| !e.is_finite()) {
            divergence(
                cfg,
                format!("{}: coarse paths diverged, order undefined", r.scheme),
                &mut out,
            )?;
        }
        for (d, e) in r.deltas.iter().zip(&r.l2_errors) {
            rows.push(vec![
                r.scheme.name().to_string(),
                num(*d),
                num(*e),
                num(r.fitted_order),
                num(r.fit_r2),
            ]);
        }
    }
    out.push(
        format!("{}.csv", cfg.name),
        csv_bytes(CONVERGENCE_HEADER, &rows)?,
    );
    if cfg.plot {
        let title = format!(
            "Strong self-convergence, x0 = {}, T = {}",
            cfg.x0, cfg.horizon
        );
        out.push_svg(
            format!("{}.svg", cfg.name),
            svg::convergence_plot(&title, &reports),
        );
    }
    Ok(out)
}

fn decomposition(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    let mut rows = Vec::new();
    for &kind in &cfg.schemes {
        for &delta in &cfg.deltas {
            let ys = default_inequality_grid(delta, &cfg.policy)?;
            let sampling = (cfg.draws > 0).then_some(Phi2Sampling {
                draws: cfg.draws,
                seed: cfg.seed,
            });
            let r = check_drift_inequality(kind, delta, &cfg.policy, &ys, sampling)?;
            if r.violations() > 0 {
                out.warnings.push(format!(
                    "{kind}: drift inequality fails at {} points (delta {delta})",
                    r.violations()
                ));
            }
            for i in 0..r.ys.len() {
                rows.push(vec![
                    kind.name().to_string(),
                    num(delta),
                    num(r.ys[i]),
                    num(r.phi1[i]),
                    num(-r.kappa1[i]),
                    r.holds[i].to_string(),
                    num(r.phi2_mean[i]),
                    num(r.phi2_stderr[i]),
                ]);
            }
        }
    }
    out.push(
        format!("{}.csv", cfg.name),
        csv_bytes(DECOMPOSITION_HEADER, &rows)?,
    );
    Ok(out)
}

fn integral_bound(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    let mut rows = Vec::new();
    for &c in &cfg.c_values {
        for &delta in &cfg.deltas {
            for &r in &cfg.r_values {
                let rep =
                    integral_bound_check(c, delta, r, cfg.n_samples, cfg.n_substeps, cfg.seed)?;
                if !rep.within_bound() {
                    out.warnings
                        .push(format!("bound exceeded at c={c}, delta={delta}, r={r}"));
                }
                rows.push(vec![
                    num(c),
                    num(delta),
                    num(r),
                    num(rep.empirical_prob),
                    num(rep.theoretical_bound),
                ]);
            }
        }
    }
    out.push(
        format!("{}.csv", cfg.name),
        csv_bytes(INTEGRAL_BOUND_HEADER, &rows)?,
    );
    Ok(out)
}

fn positivity(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    let mut rows = Vec::new();
    for &kind in &cfg.schemes {
        for &delta in &cfg.deltas {
            let setup = PathsSetup::new(
                cfg.scheme(kind),
                cfg.x0,
                delta,
                cfg.horizon,
                cfg.n_paths,
                cfg.seed,
            );
            let r = check_positivity(&setup)?;
            rows.push(vec![
                kind.name().to_string(),
                num(delta),
                num(cfg.horizon),
                r.n_paths.to_string(),
                r.n_states.to_string(),
                r.n_nonpositive.to_string(),
                r.paths_with_violation.to_string(),
                num(r.violation_fraction()),
            ]);
        }
    }
    out.push(
        format!("{}.csv", cfg.name),
        csv_bytes(POSITIVITY_HEADER, &rows)?,
    );
    Ok(out)
}

fn moments(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    let mut rows = Vec::new();
    for &kind in &cfg.schemes {
        for &p in &cfg.p {
            for &delta in &cfg.deltas {
                let setup = PathsSetup::new(
                    cfg.scheme(kind),
                    cfg.x0,
                    delta,
                    cfg.horizon,
                    cfg.n_paths,
                    cfg.seed,
                );
                let r = estimate_sup_moment(&setup, p)?;
                if r.n_diverged > 0 {
                    divergence(
                        cfg,
                        format!("{kind}: {} paths diverged (delta {delta})", r.n_diverged),
                        &mut out,
                    )?;
                }
                rows.push(vec![
                    kind.name().to_string(),
                    p.to_string(),
                    num(delta),
                    num(cfg.horizon),
                    r.n_paths.to_string(),
                    r.n_diverged.to_string(),
                    num(r.estimate),
                    num(r.stderr),
                ]);
            }
        }
    }
    out.push(
        format!("{}.csv", cfg.name),
        csv_bytes(MOMENTS_HEADER, &rows)?,
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;

    fn cfg(text: &str, e: Experiment) -> ExperimentConfig {
        ExperimentConfig::from_raw(&RawConfig::parse(text).unwrap(), e).unwrap()
    }

    #[test]
    fn numbers_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            1e300,
            f64::MIN_POSITIVE,
            123456789.01234567,
            2.0f64.sqrt(),
        ] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn trajectory_csv_layout() {
        let c = cfg(
            "schemes = TSD, LSD\nx0 = 1\ndeltas = 0.5\nT = 1",
            Experiment::Trajectories,
        );
        let out = run(&c).unwrap();
        let text =
            String::from_utf8(out.artifact("trajectories.csv").unwrap().contents.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path_id,step,t,scheme,y");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert!(lines[1].starts_with("0,0,0.0000000000000000e0,TSD,1.0000000000000000e0"));
        let svg =
            String::from_utf8(out.artifact("trajectories.svg").unwrap().contents.clone()).unwrap();
        assert_eq!(svg::polylines(&svg, "series").len(), 2);
    }

    #[test]
    fn difference_is_pointwise() {
        let c = cfg(
            "schemes = TEM, LSD\ndeltas = 0.05\nT = 1",
            Experiment::Trajectories,
        );
        let records = simulate_paths(&c, 0.05).unwrap();
        let diff = tem_minus_lsd(&records).unwrap();
        assert_eq!(diff.len(), 21);
        for (i, (t, d)) in diff.iter().enumerate() {
            assert_eq!(*t, records[0].states[i].1);
            assert_eq!(*d, records[0].states[i].2 - records[1].states[i].2);
        }
        assert!(run(&c)
            .unwrap()
            .artifact("trajectories_difference.svg")
            .is_some());
    }

    #[test]
    fn empty_stability_report_is_nan() {
        let c = cfg(
            "schemes = LSD\ndeltas = 0.5\nT = 1\nn_paths = 0",
            Experiment::Stability,
        );
        let out = run(&c).unwrap();
        let text = String::from_utf8(out.artifacts[0].contents.clone()).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "LSD,5.0000000000000000e-1,1.0000000000000000e0,0,NaN,NaN,NaN,NaN"
        );
    }

    #[test]
    fn forbidden_divergence_fails() {
        let base = "schemes = EM\nx0 = 10\ndeltas = 0.5\nT = 5\nn_paths = 20";
        let c = cfg(base, Experiment::Stability);
        assert!(!run(&c).unwrap().warnings.is_empty());
        let c = cfg(
            &format!("{base}\nfail_on_divergence = true"),
            Experiment::Stability,
        );
        assert_eq!(run(&c).unwrap_err().exit_code(), 4);
    }
}
