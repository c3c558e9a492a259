//! Command-line front end: `run`, `compare` and `solve {best-response, project}`.

pub mod config;
pub mod run;
pub mod solve;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{CompareConfig, ExperimentConfig, GradientModeConfig, MethodConfig, SetConfig};
pub use run::{compare, run_experiment, run_to_disk, write_artifacts, RunReport};

use crate::error::Error;
use crate::solvers::SolverConfig;
use solve::{BestResponseArgs, SetKind};

/// Exit status for configuration and argument errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failures while training or solving.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "robust-sched",
    version,
    about = "Distributionally robust training over grouped losses"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-10)]
    pub dual_tolerance: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            dual_tolerance: self.dual_tolerance,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configured experiment and write its artifacts.
    Run(RunArgs),
    /// Train a list of methods on one task and tabulate them.
    Compare(RunArgs),
    /// Call a solver directly; prints one JSON object.
    #[command(subcommand)]
    Solve(SolveCommand),
}

#[derive(Debug, Subcommand)]
pub enum SolveCommand {
    /// Maximize q.v over an uncertainty set.
    BestResponse {
        /// Comma-separated losses.
        #[arg(long, allow_hyphen_values = true)]
        v: String,
        #[arg(long, value_enum, default_value_t = SetKind::ChiSquare)]
        set: SetKind,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// `uniform` or a comma-separated distribution.
        #[arg(long, default_value = "uniform")]
        center: String,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Project a point onto the chi-square ball within the simplex.
    Project {
        #[arg(long, allow_hyphen_values = true)]
        v: String,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value = "uniform")]
        center: String,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Parse(_)
        | Error::Json(_)
        | Error::InvalidArgument(_)
        | Error::InvalidWeights(_) => EXIT_CONFIG,
        Error::DimensionMismatch { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn load_run_config(args: &RunArgs) -> crate::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.output {
        cfg.output_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Executes a parsed command line; returns the process exit status.
pub fn execute(cli: Cli) -> i32 {
    let result: crate::Result<()> = (|| match cli.command {
        Command::Run(args) => {
            let cfg = load_run_config(&args)?;
            let report = run_to_disk(&cfg)?;
            println!(
                "{}: average_loss={} worst_group_loss={} robust_loss={}",
                report.label,
                crate::optim::format_sig9(report.average_loss),
                crate::optim::format_sig9(report.worst_group_loss),
                crate::optim::format_sig9(report.robust_loss)
            );
            Ok(())
        }
        Command::Compare(args) => {
            let mut cfg = CompareConfig::load(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.base.seed = seed;
            }
            if let Some(out) = &args.output {
                cfg.base.output_dir = Some(out.clone());
            }
            print!("{}", compare(&cfg)?);
            Ok(())
        }
        Command::Solve(SolveCommand::BestResponse {
            v,
            set,
            rho,
            alpha,
            center,
            solver,
        }) => {
            let out = solve::solve_best_response(&BestResponseArgs {
                v: &v,
                set,
                rho,
                alpha,
                center: &center,
                solver: solver.config(),
            })?;
            println!("{out}");
            Ok(())
        }
        Command::Solve(SolveCommand::Project {
            v,
            rho,
            center,
            solver,
        }) => {
            let out = solve::solve_project(&v, rho, &center, &solver.config())?;
            println!("{out}");
            Ok(())
        }
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
