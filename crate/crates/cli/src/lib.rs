//! Command-line front end of the workbench.
//!
//! Every verb is a plain function over explicit arguments, so tests and the
//! binary share one code path. Output directories default to `$MCRL_OUT`
//! (or `out/`).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod serve;
pub mod session;

/// Environment variable holding the default output root.
pub const OUT_ENV: &str = "MCRL_OUT";

#[derive(Debug, Parser)]
#[command(name = "mcrl", version, about = "Metacognitive reinforcement learning workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct OutDir {
    /// Output directory
    #[arg(long, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write seeded trial instances (spec + ground truth) as JSON files
    GenEnv {
        #[arg(long)]
        condition: String,
        #[arg(long, default_value_t = 35)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Validate a participant JSONL file and summarize it
    Ingest {
        #[arg(long)]
        records: PathBuf,
        /// Also write the validated records, re-serialized, to this file
        #[arg(long)]
        normalized: Option<PathBuf>,
    },
    /// Fit models to every participant (resumable)
    Fit {
        #[arg(long)]
        records: PathBuf,
        /// Comma-separated model ids, or `all` for the whole grid
        #[arg(long, default_value = "all")]
        models: String,
        /// Grid manifest to resolve model ids against (default: built-in grid)
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = mcrl_core::fitkit::DEFAULT_BUDGET)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Parallel fit jobs (0 = one per core)
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Model- and family-level Bayesian model selection from a BIC matrix
    Select {
        #[arg(long)]
        bic: PathBuf,
        /// `base`, `singletons`, or a JSON file mapping family names to model ids
        #[arg(long, default_value = "base")]
        partition: String,
        /// Monte Carlo draws for exceedance probabilities
        #[arg(long, default_value_t = 100_000)]
        mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Simulate agent cohorts and write learning curves and trend tests
    Simulate {
        /// Comma-separated model ids
        #[arg(long, default_value = "reinforce")]
        model: String,
        /// Comma-separated condition ids
        #[arg(long, default_value = "exp1-far")]
        condition: String,
        #[arg(long, default_value_t = 30)]
        agents: usize,
        #[arg(long, default_value_t = 35)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON object of parameter values (names as in fit output)
        #[arg(long)]
        params: Option<PathBuf>,
        /// Single parameter override, `name=value`; repeatable
        #[arg(long = "set", value_name = "NAME=VALUE")]
        set: Vec<String>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Learning curves, trend tests and learner counts for recorded sessions
    Analyze {
        #[arg(long)]
        records: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Print the model grid manifest
    Grid {
        /// Write the manifest here instead of stdout
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Host the web task and collect uploaded sessions
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "exp1-far")]
        condition: String,
        #[arg(long, default_value_t = 35)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Serve trials from `gen-env` files in this directory instead
        #[arg(long)]
        trial_dir: Option<PathBuf>,
        /// Static web bundle
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    use commands::*;
    match cli.command {
        Command::GenEnv { condition, count, seed, out } => {
            let n = gen_env(&condition.parse()?, count, seed, &out.out)?;
            println!("wrote {n} trial files to {}", out.out.display());
        }
        Command::Ingest { records, normalized } => print!("{}", ingest(&records, normalized.as_deref())?),
        Command::Fit { records, models, grid, budget, seed, jobs, out } => {
            let opts = FitOptions { models, grid, budget, seed, jobs };
            print!("{}", fit(&records, &opts, &out.out)?);
        }
        Command::Select { bic, partition, mc, seed, out } => print!("{}", select(&bic, &partition, mc, seed, &out.out)?),
        Command::Simulate { model, condition, agents, trials, seed, params, set, out } => {
            let opts = SimulateOptions { models: model, conditions: condition, agents, trials, seed, params, set };
            print!("{}", simulate(&opts, &out.out)?);
        }
        Command::Analyze { records, out } => print!("{}", analyze(&records, &out.out)?),
        Command::Grid { manifest } => {
            let text = grid_text();
            match manifest {
                Some(p) => write_atomic(&p, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
        Command::Serve { host, port, condition, trials, seed, trial_dir, static_dir, out } => {
            let set = match trial_dir {
                Some(dir) => load_trial_dir(&dir)?,
                None => session::TrialSet::generate(condition.parse()?, trials, seed)?,
            };
            std::fs::create_dir_all(&out.out)?;
            let state = std::sync::Arc::new(serve::AppState::new(set, out.out.join("sessions.jsonl")));
            tokio::runtime::Runtime::new()?.block_on(serve::run(&format!("{host}:{port}"), state, static_dir))?;
        }
    }
    Ok(())
}
