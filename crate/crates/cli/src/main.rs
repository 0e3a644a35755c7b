use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pure_cli::{cmd_catalog, cmd_compare, cmd_run, cmd_verify, CliError, Format, Options};

/// Seeded experiment runner for optimistic model-based control of SDEs.
#[derive(Parser)]
#[command(name = "pure", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (defaults to the config's `out`, then `.`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for seed-parallel execution.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the number of seeds (`base + i`).
    #[arg(long, global = true)]
    seed_count: Option<usize>,
    /// Format of what is printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of one experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a property suite: coverage, gronwall, prop2, convergence, eluder or all.
    Verify {
        suite: String,
        /// Optional suite sizes (TOML or JSON).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run several configs sharing env and N and tabulate them side by side.
    Compare {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
    },
    /// List the environments and their default parameters.
    Catalog,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("PURE_LOG", "warn")).init();
    let cli = Cli::parse();
    let opts = Options {
        out: cli.out,
        workers: cli.workers,
        seed_count: cli.seed_count,
        format: cli.format,
    };
    let result: Result<String, CliError> = match &cli.command {
        Command::Run { config } => cmd_run(config, &opts),
        Command::Verify { suite, config } => cmd_verify(suite, config.as_deref(), &opts),
        Command::Compare { configs } => cmd_compare(configs, &opts),
        Command::Catalog => cmd_catalog(opts.format),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Verify(report) = &e {
                if let Ok(json) = serde_json::to_string_pretty(report) {
                    println!("{json}");
                }
            }
            eprintln!("pure: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
