//! Command-line driver for the allocation benchmark pipeline.
//!
//! Exit codes: 0 on success, 1 on validation failure, 2 on runtime abort.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{cmd_build_flows, cmd_report, cmd_run, cmd_validate, CliError, Ctx};
use config::BenchConfig;

#[derive(Parser)]
#[command(name = "swfbench")]
#[command(about = "Run task-allocation games and score them by fairness x efficiency")]
struct Cli {
    /// Directory all relative config paths resolve against.
    #[arg(long, default_value = ".")]
    workdir: PathBuf,

    /// Benchmark config file, relative to --workdir.
    #[arg(long, default_value = "bench.json")]
    config: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check config, inputs, cache completeness, and template checksums.
    Validate,
    /// Cluster the graded pool and cut task flows.
    BuildFlows {
        /// Override the configured cluster count.
        #[arg(long)]
        k: Option<usize>,
        /// Override the configured flow length.
        #[arg(long)]
        flow_len: Option<usize>,
        /// Override the configured flow-builder seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also dump the similarity matrix as CSV to this path.
        #[arg(long)]
        dump_similarity: Option<PathBuf>,
    },
    /// Run every configured allocator over every flow.
    Run {
        /// Override the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Aggregate trajectories into leaderboard, scatter, and bias files.
    Report {
        /// Accept trajectories whose config digest differs from the manifest.
        #[arg(long)]
        force: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = if cli.config.is_absolute() {
        cli.config.clone()
    } else {
        cli.workdir.join(&cli.config)
    };
    let config =
        BenchConfig::load(&config_path).map_err(|e| CliError::Validation(format!("{e:#}")))?;
    let mut config = config.resolved(&cli.workdir);

    match cli.command {
        Command::Validate => {
            let ctx = Ctx {
                workdir: cli.workdir,
                config,
            };
            cmd_validate(&ctx)
        }
        Command::BuildFlows {
            k,
            flow_len,
            seed,
            dump_similarity,
        } => {
            if let Some(k) = k {
                config.flowbuilder.k = k;
            }
            if let Some(flow_len) = flow_len {
                config.flowbuilder.flow_len = flow_len;
            }
            if let Some(seed) = seed {
                config.flowbuilder.seed = seed;
            }
            let ctx = Ctx {
                workdir: cli.workdir,
                config,
            };
            cmd_build_flows(&ctx, dump_similarity.as_deref())
        }
        Command::Run { seed, workers } => {
            if let Some(seed) = seed {
                config.run.seed = seed;
            }
            if let Some(workers) = workers {
                config.workers = workers;
            }
            let ctx = Ctx {
                workdir: cli.workdir,
                config,
            };
            cmd_run(&ctx)
        }
        Command::Report { force } => {
            let ctx = Ctx {
                workdir: cli.workdir,
                config,
            };
            cmd_report(&ctx, force)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            match error {
                CliError::Validation(_) => ExitCode::from(1),
                CliError::Runtime(_) => ExitCode::from(2),
            }
        }
    }
}
