//! Monte Carlo experiments over many independent paths.
//!
//! Path `i` of an experiment seeded with `s` is always driven by the stream
//! `RngSeed { seed: s, stream_id: i }`, and per-path results are reduced in
//! path order, so every report is a deterministic function of its inputs
//! regardless of the rayon pool size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{BrownianPath, RngSeed};
use crate::schemes::{
    drive, IntegralMode, PathOutcome, Scheme, SchemeKind, SchemeState, SdeProblem, TimeGrid,
};
use crate::stats::{binomial_stderr, compensated_sum, fit_line, mean_stderr, quantile_sorted};

/// Drives one path of `scheme` from `x0` with increments from stream `path_id`.
pub fn run_single_path(
    scheme: &Scheme<f64>,
    x0: f64,
    grid: &TimeGrid<f64>,
    seed: RngSeed,
    visit: impl FnMut(&SchemeState<f64>),
) -> Result<PathOutcome<f64>> {
    let problem = SdeProblem::cubic_example(x0);
    if grid.n_steps() == 0 {
        return drive(scheme, &problem, grid, &[], Some(&[]), visit);
    }
    let path = BrownianPath::sample(seed, grid.n_steps(), grid.delta())?;
    let aux = scheme.uses_aux().then(|| path.auxiliary_normals(0));
    drive(
        scheme,
        &problem,
        grid,
        path.level(0).expect("level 0"),
        aux.as_deref(),
        visit,
    )
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(
            "delta",
            format!("must lie in (0, 1], got {delta}"),
        ));
    }
    Ok(())
}

/// Grid for the path experiments: runs until the first node at or past the
/// horizon.
fn check_paths_setup(delta: f64, horizon: f64) -> Result<TimeGrid<f64>> {
    check_delta(delta)?;
    TimeGrid::reaching(horizon, delta)
}

/// Strong error of one scheme against a fine-grid reference of the same
/// scheme driven by the same Brownian paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub scheme: SchemeKind,
    /// Strictly decreasing.
    pub deltas: Vec<f64>,
    /// `sqrt(mean |y_T^dt - y_T^ref|^2)` per step size.
    pub l2_errors: Vec<f64>,
    /// Slope of `ln error` against `ln dt`.
    pub fitted_order: f64,
    pub fit_intercept: f64,
    pub fit_r2: f64,
    pub reference_delta: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSetup {
    pub scheme: Scheme<f64>,
    pub x0: f64,
    pub horizon: f64,
    /// Dyadic ladder, coarsest first.
    pub deltas: Vec<f64>,
    /// `deltas[0] / 2^k`, at least as fine as the last ladder entry.
    pub reference_delta: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Exact power-of-two exponent `k` with `coarse / fine == 2^k`.
fn dyadic_level(coarse: f64, fine: f64) -> Option<usize> {
    let ratio = coarse / fine;
    let k = ratio.log2().round();
    if !(0.0..=40.0).contains(&k) {
        return None;
    }
    ((ratio - 2f64.powi(k as i32)).abs() <= 1e-9 * ratio).then_some(k as usize)
}

struct Ladder {
    grids: Vec<TimeGrid<f64>>,
    levels: Vec<usize>,
    reference_grid: TimeGrid<f64>,
    reference_level: usize,
    base_steps: usize,
}

fn ladder(setup: &ConvergenceSetup) -> Result<Ladder> {
    if setup.deltas.is_empty() {
        return Err(Error::invalid(
            "deltas",
            "at least one step size is required",
        ));
    }
    if setup.deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("deltas", "must be strictly decreasing"));
    }
    if setup.scheme.mode() == IntegralMode::ExactGaussian && setup.scheme.kind().is_langevin() {
        return Err(Error::invalid(
            "integral_mode",
            "exact integral draws are not coupled across refinement levels",
        ));
    }
    let base = setup.deltas[0];
    check_delta(base)?;
    let base_grid = TimeGrid::covering(setup.horizon, base)?;
    if base_grid.n_steps() == 0 {
        return Err(Error::invalid("horizon", "must be positive"));
    }
    let mut levels = Vec::with_capacity(setup.deltas.len());
    let mut grids = Vec::with_capacity(setup.deltas.len());
    for &d in &setup.deltas {
        let k = dyadic_level(base, d).ok_or_else(|| {
            Error::invalid(
                "deltas",
                format!("{d} is not {base} divided by a power of two"),
            )
        })?;
        levels.push(k);
        grids.push(TimeGrid::new(d, base_grid.n_steps() << k)?);
    }
    let reference_level = dyadic_level(base, setup.reference_delta).ok_or_else(|| {
        Error::invalid(
            "reference_delta",
            format!(
                "{} is not {base} divided by a power of two",
                setup.reference_delta
            ),
        )
    })?;
    if reference_level < *levels.last().expect("non-empty") {
        return Err(Error::invalid(
            "reference_delta",
            "must be at least as fine as the finest ladder step",
        ));
    }
    Ok(Ladder {
        grids,
        levels,
        reference_grid: TimeGrid::new(
            setup.reference_delta,
            base_grid.n_steps() << reference_level,
        )?,
        reference_level,
        base_steps: base_grid.n_steps(),
    })
}

/// RMS terminal errors at each ladder step against the reference, all runs
/// of one path sharing a single refined Brownian path.
pub fn coupled_terminal_errors(setup: &ConvergenceSetup) -> Result<Vec<f64>> {
    if setup.n_paths < 1 {
        return Err(Error::invalid("n_paths", "must be positive"));
    }
    let lad = ladder(setup)?;
    let problem = SdeProblem::cubic_example(setup.x0);
    let per_path: Vec<Vec<f64>> = (0..setup.n_paths as u64)
        .into_par_iter()
        .map(|p| -> Result<Vec<f64>> {
            let path =
                BrownianPath::sample(RngSeed::new(setup.seed, p), lad.base_steps, setup.deltas[0])?
                    .refine(lad.reference_level)?;
            let terminal = |grid: &TimeGrid<f64>, level: usize| -> Result<PathOutcome<f64>> {
                drive(
                    &setup.scheme,
                    &problem,
                    grid,
                    path.level(level).expect("refined"),
                    None,
                    |_| {},
                )
            };
            let reference = terminal(&lad.reference_grid, lad.reference_level)?;
            if let Some(step) = reference.diverged_at {
                return Err(Error::ReferenceDiverged { path: p, step });
            }
            lad.grids
                .iter()
                .zip(&lad.levels)
                .map(|(g, &k)| {
                    let out = terminal(g, k)?;
                    Ok(if out.diverged() {
                        f64::INFINITY
                    } else {
                        (out.last.y - reference.last.y).powi(2)
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..setup.deltas.len())
        .map(|j| {
            let mean = compensated_sum(per_path.iter().map(|e| e[j])) / setup.n_paths as f64;
            mean.sqrt()
        })
        .collect())
}

/// Least-squares order of strong self-convergence.
pub fn estimate_strong_order(setup: &ConvergenceSetup) -> Result<ConvergenceReport> {
    if setup.n_paths < 1000 {
        return Err(Error::invalid(
            "n_paths",
            format!("at least 1000 paths are needed, got {}", setup.n_paths),
        ));
    }
    if setup.deltas.len() < 2 {
        return Err(Error::invalid(
            "deltas",
            "at least two step sizes are needed for a fit",
        ));
    }
    let last = *setup.deltas.last().expect("non-empty");
    if !(setup.reference_delta < last) {
        return Err(Error::invalid(
            "reference_delta",
            "must be strictly finer than every ladder step",
        ));
    }
    let errors = coupled_terminal_errors(setup)?;
    let xs: Vec<f64> = setup.deltas.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let fit = if ys.iter().all(|y| y.is_finite()) {
        fit_line(&xs, &ys)
    } else {
        None
    };
    Ok(ConvergenceReport {
        scheme: setup.scheme.kind(),
        deltas: setup.deltas.clone(),
        l2_errors: errors,
        fitted_order: fit.map_or(f64::NAN, |f| f.slope),
        fit_intercept: fit.map_or(f64::NAN, |f| f.intercept),
        fit_r2: fit.map_or(f64::NAN, |f| f.r2),
        reference_delta: setup.reference_delta,
        n_paths: setup.n_paths,
    })
}

/// Long-horizon behaviour of `n_paths` independent paths.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub scheme: SchemeKind,
    pub delta: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub threshold: f64,
    pub n_below: usize,
    pub n_diverged: usize,
    /// `None` when `n_paths == 0`.
    pub fraction_below: Option<f64>,
    pub fraction_diverged: Option<f64>,
    /// Median and 99th percentile of `|y_T|` over non-diverged paths.
    pub q50: Option<f64>,
    pub q99: Option<f64>,
}

impl StabilityReport {
    pub fn below_stderr(&self) -> f64 {
        self.fraction_below
            .map_or(f64::NAN, |p| binomial_stderr(p, self.n_paths))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathsSetup {
    pub scheme: Scheme<f64>,
    pub x0: f64,
    pub delta: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl PathsSetup {
    pub fn new(
        scheme: Scheme<f64>,
        x0: f64,
        delta: f64,
        horizon: f64,
        n_paths: usize,
        seed: u64,
    ) -> Self {
        Self {
            scheme,
            x0,
            delta,
            horizon,
            n_paths,
            seed,
        }
    }
}

pub fn run_stability_experiment(setup: &PathsSetup, threshold: f64) -> Result<StabilityReport> {
    if !(threshold > 0.0) {
        return Err(Error::invalid(
            "threshold",
            format!("must be positive, got {threshold}"),
        ));
    }
    let grid = check_paths_setup(setup.delta, setup.horizon)?;
    let terminals: Vec<Option<f64>> = (0..setup.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let out = run_single_path(
                &setup.scheme,
                setup.x0,
                &grid,
                RngSeed::new(setup.seed, p),
                |_| {},
            )?;
            Ok((!out.diverged()).then_some(out.last.y.abs()))
        })
        .collect::<Result<_>>()?;
    let n = setup.n_paths;
    let mut finite: Vec<f64> = terminals.iter().flatten().copied().collect();
    finite.sort_by(f64::total_cmp);
    let n_diverged = n - finite.len();
    let n_below = finite.iter().filter(|&&v| v < threshold).count();
    let frac = |k: usize| (n > 0).then(|| k as f64 / n as f64);
    Ok(StabilityReport {
        scheme: setup.scheme.kind(),
        delta: setup.delta,
        horizon: setup.horizon,
        n_paths: n,
        threshold,
        n_below,
        n_diverged,
        fraction_below: frac(n_below),
        fraction_diverged: frac(n_diverged),
        q50: quantile_sorted(&finite, 0.5),
        q99: quantile_sorted(&finite, 0.99),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    pub scheme: SchemeKind,
    pub delta: f64,
    pub horizon: f64,
    pub n_paths: usize,
    /// States after the initial one, over all paths.
    pub n_states: usize,
    pub n_nonpositive: usize,
    /// Paths that visit a nonpositive state at least once.
    pub paths_with_violation: usize,
}

impl PositivityReport {
    pub fn violation_fraction(&self) -> f64 {
        if self.n_states == 0 {
            0.0
        } else {
            self.n_nonpositive as f64 / self.n_states as f64
        }
    }
}

/// Counts nonpositive states visited from a positive initial value.
pub fn check_positivity(setup: &PathsSetup) -> Result<PositivityReport> {
    if !(setup.x0 > 0.0) {
        return Err(Error::invalid(
            "x0",
            format!("must be positive, got {}", setup.x0),
        ));
    }
    let grid = check_paths_setup(setup.delta, setup.horizon)?;
    let counts: Vec<(usize, usize)> = (0..setup.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut states = 0;
            let mut bad = 0;
            run_single_path(
                &setup.scheme,
                setup.x0,
                &grid,
                RngSeed::new(setup.seed, p),
                |s| {
                    if s.step_index > 0 {
                        states += 1;
                        if s.y <= 0.0 {
                            bad += 1;
                        }
                    }
                },
            )?;
            Ok((states, bad))
        })
        .collect::<Result<_>>()?;
    Ok(PositivityReport {
        scheme: setup.scheme.kind(),
        delta: setup.delta,
        horizon: setup.horizon,
        n_paths: setup.n_paths,
        n_states: counts.iter().map(|c| c.0).sum(),
        n_nonpositive: counts.iter().map(|c| c.1).sum(),
        paths_with_violation: counts.iter().filter(|c| c.1 > 0).count(),
    })
}

/// Monte Carlo estimate of `E[max_n |y_n|^p]` over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub scheme: SchemeKind,
    pub p: u32,
    pub delta: f64,
    pub horizon: f64,
    pub n_paths: usize,
    /// Diverged paths are left out of the estimate.
    pub n_diverged: usize,
    pub estimate: f64,
    pub stderr: f64,
}

pub fn estimate_sup_moment(setup: &PathsSetup, p: u32) -> Result<MomentReport> {
    if !(2..=9).contains(&p) {
        return Err(Error::invalid(
            "p",
            format!("must be an integer in [2, 9], got {p}"),
        ));
    }
    if setup.n_paths < 2 {
        return Err(Error::invalid("n_paths", "at least two paths are needed"));
    }
    let grid = check_paths_setup(setup.delta, setup.horizon)?;
    let sups: Vec<Option<f64>> = (0..setup.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut sup = 0.0f64;
            let out = run_single_path(
                &setup.scheme,
                setup.x0,
                &grid,
                RngSeed::new(setup.seed, i),
                |s| {
                    sup = sup.max(s.y.abs());
                },
            )?;
            Ok((!out.diverged()).then(|| sup.powi(p as i32)))
        })
        .collect::<Result<_>>()?;
    let finite: Vec<f64> = sups.iter().flatten().copied().collect();
    let (estimate, stderr) = mean_stderr(&finite).unwrap_or((f64::NAN, f64::NAN));
    Ok(MomentReport {
        scheme: setup.scheme.kind(),
        p,
        delta: setup.delta,
        horizon: setup.horizon,
        n_paths: setup.n_paths,
        n_diverged: setup.n_paths - finite.len(),
        estimate,
        stderr,
    })
}
