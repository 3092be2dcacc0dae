use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sdsim::{
    figures, load_config, read_config, resolve_out_dir, run, write_artifacts, CliError, Experiment,
    RawConfig, RunOutput,
};

/// Semi-discrete SDE integrators: experiments, tables and plots.
#[derive(Parser)]
#[command(name = "sdsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory [default: $SDSIM_OUT_DIR, else ./results].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Override a config entry, e.g. `--set n_paths=100`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Sample trajectories of each scheme on common noise.
    Simulate,
    /// Long-horizon decay statistics.
    Stability,
    /// Strong self-convergence order.
    Convergence,
    /// Drift inequality and martingale-part checks.
    Decomposition,
    /// Tail probability of the left-point integral error.
    IntegralBound,
    /// Counts nonpositive states.
    Positivity,
    /// Moments of the running maximum.
    Moments,
    /// Regenerates all trajectory and difference figures.
    MakeFigures,
}

impl Command {
    fn experiment(self) -> Option<Experiment> {
        Some(match self {
            Command::Simulate => Experiment::Trajectories,
            Command::Stability => Experiment::Stability,
            Command::Convergence => Experiment::Convergence,
            Command::Decomposition => Experiment::Decomposition,
            Command::IntegralBound => Experiment::IntegralBound,
            Command::Positivity => Experiment::Positivity,
            Command::Moments => Experiment::Moments,
            Command::MakeFigures => return None,
        })
    }
}

fn execute(cli: Cli) -> Result<(RunOutput, PathBuf), CliError> {
    match cli.command.experiment() {
        Some(experiment) => {
            let raw = match &cli.config {
                Some(path) => read_config(path)?,
                None => RawConfig::default(),
            };
            let cfg = load_config(raw, experiment, &cli.set, cli.seed)?;
            let dir = resolve_out_dir(cli.out, cfg.out.as_deref());
            Ok((run(&cfg)?, dir))
        }
        None => {
            if cli.config.is_some() || !cli.set.is_empty() {
                return Err(CliError::Validation {
                    key: "config".into(),
                    reason: "make-figures uses its built-in configs".into(),
                });
            }
            Ok((
                figures::make_figures(cli.seed)?,
                resolve_out_dir(cli.out, None),
            ))
        }
    }
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    let (output, dir) = match cli.threads {
        Some(0) => {
            return Err(CliError::Validation {
                key: "threads".into(),
                reason: "must be at least 1".into(),
            })
        }
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(|| execute(cli))?,
        None => execute(cli)?,
    };
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    for path in write_artifacts(&dir, &output)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let err = CliError::Parse {
                line: None,
                message: first.trim_start_matches("error: ").to_string(),
            };
            eprintln!("{}", err.machine_line());
            return ExitCode::from(2);
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
