use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use progmap::cli::{cmd_generate, cmd_inspect, cmd_run, RunOptions};
use progmap::config::validate_config;
use progmap::synth::{Domain, SynthParams};

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "progmap", version, about = "Progressive entity matching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (variant, seed) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Maximum experiment cells run in parallel.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: Option<u64>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Print one row of a strategy snapshot.
    Inspect { snapshot: PathBuf, context: String },
    /// Check a config file and print it with defaults filled in.
    Validate { config: PathBuf },
    /// Write a synthetic dataset and a matching experiment config.
    Generate {
        #[arg(long, default_value = "products")]
        domain: Domain,
        #[arg(long)]
        out: PathBuf,
        /// Records per side; defaults to 5000.
        #[arg(long)]
        size: Option<usize>,
        /// Ground-truth pairs; defaults to 1300 for products, a quarter of
        /// the size for movies.
        #[arg(long)]
        matches: Option<usize>,
        #[arg(long, default_value_t = 2019)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(CONFIG_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Run {
            config,
            jobs,
            out,
            seed_override,
        } => {
            let config = match validate_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(CONFIG_ERROR, e),
            };
            let options = RunOptions {
                jobs: jobs.map(|j| j as usize),
                out,
                seed_override,
            };
            match cmd_run(&config, &options) {
                Ok(summary) => {
                    println!("variant\tseed\tfinal_mrr\treplays");
                    for cell in &summary.cells {
                        println!("{}\t{}\t{:.4}\t{}", cell.variant, cell.seed, cell.final_mrr, cell.replays);
                    }
                    println!("wrote {}", summary.output.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(RUNTIME_ERROR, e),
            }
        }
        Command::Inspect { snapshot, context } => match cmd_inspect(&snapshot, &context) {
            Ok(rows) => {
                println!("action\tS\tprobability");
                for row in rows {
                    println!("{}\t{}\t{:.6}", row.action, row.weight, row.probability);
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(RUNTIME_ERROR, e),
        },
        Command::Validate { config } => match validate_config(&config) {
            Ok(c) => {
                print!("{}", c.echo());
                ExitCode::SUCCESS
            }
            Err(e) => fail(CONFIG_ERROR, e),
        },
        Command::Generate {
            domain,
            out,
            size,
            matches,
            seed,
        } => {
            let mut params = match domain {
                Domain::Products => SynthParams::products(),
                Domain::Movies => SynthParams::movies(size.unwrap_or(5000)),
            };
            if let Some(size) = size {
                params.local_size = size;
                params.external_size = size;
                if domain == Domain::Products && matches.is_none() {
                    params.matches = params.matches.min(size);
                }
            }
            if let Some(matches) = matches {
                params.matches = matches;
            }
            params.seed = seed;
            if params.matches > params.local_size.min(params.external_size) {
                return fail(CONFIG_ERROR, "--matches exceeds the table size");
            }
            match cmd_generate(&params, &out) {
                Ok(conf) => {
                    println!("wrote {}", conf.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(RUNTIME_ERROR, e),
            }
        }
    }
}

fn fail(code: u8, error: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {error}");
    ExitCode::from(code)
}
