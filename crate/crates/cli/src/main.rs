//! `workbench` — the command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or invariant failure, 2 usage
//! error (clap reports its own parse failures with code 2 as well).
//! The seed defaults to the `WORKBENCH_SEED` environment variable when
//! the `--seed` flag is absent, and to 0 when both are.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use onticlab::Field;
use onticlab_cli::{commands, resolve_seed, CliError};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FieldArg {
    Real,
    Complex,
}

impl From<FieldArg> for Field {
    fn from(f: FieldArg) -> Field {
        match f {
            FieldArg::Real => Field::Real,
            FieldArg::Complex => Field::Complex,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "workbench",
    version,
    about = "Optimize, evaluate and simulate overlap-inequality scenarios",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search for a scenario minimizing the score S.
    Optimize {
        /// Hilbert-space dimension (3..=8).
        #[arg(long)]
        dim: usize,
        /// Number of states besides ψ0 (3..=12).
        #[arg(long)]
        n: usize,
        /// Independent random restarts.
        #[arg(long, default_value_t = 64)]
        restarts: u32,
        /// Master seed (default: $WORKBENCH_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Amplitude field to search over.
        #[arg(long, value_enum, default_value_t = FieldArg::Real)]
        field: FieldArg,
        /// Write the optimized scenario here (canonical JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a stored scenario.
    Evaluate {
        /// Scenario file to read.
        #[arg(long)]
        scenario: PathBuf,
        /// Also report S^(η) at this detection efficiency.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Monte-Carlo finite-count trials of a stored scenario.
    Simulate {
        /// Scenario file to read.
        #[arg(long)]
        scenario: PathBuf,
        /// Mean heralded preparations per setting.
        #[arg(long)]
        counts: f64,
        /// Number of independent trials.
        #[arg(long)]
        trials: u64,
        /// Bootstrap resamples per trial for the error bar.
        #[arg(long, default_value_t = 200)]
        bootstrap: u64,
        /// Master seed (default: $WORKBENCH_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
        /// "defaults", "off", or KEY=VAL,... overrides.
        #[arg(long, default_value = "defaults")]
        noise: String,
        /// Write one row per trial plus a summary row here.
        #[arg(long)]
        csv: PathBuf,
    },
    /// Critical detection efficiency η* of a stored scenario.
    Threshold {
        /// Scenario file to read.
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Brute-force the inequality over random finite ontic models.
    Oracle {
        /// Ontic states per model (1..=4096).
        #[arg(long)]
        lambda: usize,
        /// Number of states besides ψ0 (>= 3).
        #[arg(long)]
        n: usize,
        /// Number of random models to check.
        #[arg(long)]
        trials: u64,
        /// Master seed (default: $WORKBENCH_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Optimize for each n in a range and tabulate the scores.
    Sweep {
        /// Hilbert-space dimension (3..=8).
        #[arg(long)]
        dim: usize,
        /// First n of the range.
        #[arg(long = "n-min")]
        n_min: usize,
        /// Last n of the range (inclusive).
        #[arg(long = "n-max")]
        n_max: usize,
        /// Independent random restarts per n.
        #[arg(long, default_value_t = 64)]
        restarts: u32,
        /// Master seed (default: $WORKBENCH_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Write one row per n here.
        #[arg(long)]
        csv: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Optimize { dim, n, restarts, seed, field, out } => {
            let seed = resolve_seed(seed)?;
            match out {
                Some(path) => {
                    commands::cmd_optimize(dim, n, restarts, seed, field.into(), &path)
                }
                None => {
                    // No --out: report scores without persisting.
                    let dir = tempfile::tempdir()
                        .map_err(|e| CliError::Failure(format!("tempdir: {e}")))?;
                    commands::cmd_optimize(
                        dim,
                        n,
                        restarts,
                        seed,
                        field.into(),
                        &dir.path().join("scenario.json"),
                    )
                }
            }
        }
        Cmd::Evaluate { scenario, eta } => commands::cmd_evaluate(&scenario, eta),
        Cmd::Simulate { scenario, counts, trials, bootstrap, seed, noise, csv } => {
            let seed = resolve_seed(seed)?;
            commands::cmd_simulate(&scenario, counts, trials, bootstrap, seed, &noise, &csv)
        }
        Cmd::Threshold { scenario } => commands::cmd_threshold(&scenario),
        Cmd::Oracle { lambda, n, trials, seed } => {
            let seed = resolve_seed(seed)?;
            commands::cmd_oracle(lambda, n, trials, seed)
        }
        Cmd::Sweep { dim, n_min, n_max, restarts, seed, csv } => {
            let seed = resolve_seed(seed)?;
            commands::cmd_sweep(dim, n_min, n_max, restarts, seed, &csv)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
