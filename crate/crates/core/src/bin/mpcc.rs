use clap::{Args, Parser, Subcommand, ValueEnum};
use mpcc_newton::harness::{diagnose, run_experiment, Execution, ExperimentConfig, ProblemSource};
use mpcc_newton::problem::{load_point, save_lq_problem, Builtin};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mpcc", version, about = "Semismooth Newton solver for MPCCs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve from seeded random starts and report statistics.
    Solve(SolveArgs),
    /// Classify a given primal-dual point.
    Diagnose(DiagnoseArgs),
    /// Write a built-in problem as a JSON file.
    Export(ExportArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// `toy`, `perturbed`, `obstacle` or a path to a JSON problem file.
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = 0.1)]
    c: f64,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long = "N", default_value_t = 16)]
    n: usize,
}

impl ProblemArgs {
    fn source(&self) -> ProblemSource {
        match self.problem.as_str() {
            "toy" => ProblemSource::Builtin(Builtin::Toy { c: self.c }),
            "perturbed" => ProblemSource::Builtin(Builtin::Perturbed { eps: self.eps }),
            "obstacle" => ProblemSource::Builtin(Builtin::Obstacle { n: self.n }),
            path => ProblemSource::File(PathBuf::from(path)),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExecArg {
    Sequential,
    Parallel,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-11)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Also stop once the merit gradient norm falls below `--tau-stat`.
    #[arg(long)]
    stat_stop: bool,
    #[arg(long, default_value_t = 1e-9)]
    tau_stat: f64,
    #[arg(long)]
    no_lq_repair: bool,
    #[arg(long, value_enum, default_value_t = ExecArg::Parallel)]
    exec: ExecArg,
    /// CSV file receiving one row per run.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// JSON point with fields x, lambda, eta, mu, nu.
    #[arg(long)]
    point: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> mpcc_newton::Result<()> {
    match cli.command {
        Command::Solve(a) => {
            let mut cfg = ExperimentConfig::new(a.problem.source(), a.runs, a.seed);
            cfg.options.tau_abs = a.tol;
            cfg.options.max_iter = a.max_iter;
            cfg.options.lq_repair = !a.no_lq_repair;
            cfg.options.enable_stationarity_stop = a.stat_stop;
            cfg.options.tau_stat = a.tau_stat;
            cfg.execution = match a.exec {
                ExecArg::Sequential => Execution::Sequential,
                ExecArg::Parallel => Execution::Parallel,
            };
            cfg.output = a.out;
            let (_, summary) = run_experiment(&cfg)?;
            println!("problem            {}", cfg.problem);
            println!("{summary}");
        }
        Command::Diagnose(a) => {
            let problem = a.problem.source().load()?;
            let z = load_point(&a.point)?;
            println!("{}", diagnose(&problem, &z)?);
        }
        Command::Export(a) => {
            let problem = a.problem.source().load()?;
            save_lq_problem(&problem, &a.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
