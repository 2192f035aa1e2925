//! Experiment runner for the `hawkesmf` estimators.
//!
//! Four subcommands share one JSON [`ExperimentConfig`]:
//!
//! * `simulate` samples the configured model to a `t,node` CSV plus a JSON
//!   sidecar;
//! * `fit` runs one estimator on an event file;
//! * `sweep` simulates over grids of `T`, `d`, `||Phi||` (or fitting decay
//!   rates) and writes one tidy CSV row per sample and method;
//! * `bench` times the estimators against a shared likelihood target.
//!
//! Every output embeds the resolved configuration, so any file can be
//! regenerated from its own header.

pub mod bench;
pub mod config;
pub mod error;
pub mod fit;
pub mod runner;
pub mod simulate;
pub mod sweep;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use hawkesmf::Method;

pub use config::ExperimentConfig;
pub use error::CliError;

/// Environment variable consulted when neither `--threads` nor the
/// configuration sets the pool width.
pub const THREADS_ENV: &str = "HAWKESMF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hawkesmf", version, about = "Simulate and calibrate multivariate Hawkes processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for sweeps and per-node solves.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Options shared by the config-driven commands.
#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; defaults to the path in the configuration, then stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the horizon.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    /// Override the number of nodes.
    #[arg(long)]
    pub d: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample events from the configured model.
    Simulate(ConfigArgs),
    /// Fit one estimator to an event file.
    Fit {
        /// Event CSV (`t,node`); horizon and node count come from its sidecar
        /// unless overridden.
        #[arg(long)]
        events: PathBuf,
        /// mf, mf_approx, mle or cf.
        #[arg(long)]
        method: Option<Method>,
        /// Comma-separated decay rates of the fitting basis.
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        /// Iteration cap for the likelihood fit.
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long)]
        d: Option<usize>,
    },
    /// Run a parameter sweep.
    Sweep(ConfigArgs),
    /// Time the estimators against a shared likelihood target.
    Bench(ConfigArgs),
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, CliError> {
    let cfg = ExperimentConfig::load(&args.config)?.with_overrides(args.seed, args.horizon, args.d);
    cfg.validate()?;
    Ok(cfg)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Pool width: the flag, then the configuration, then the environment.
pub fn resolve_threads(flag: Option<usize>, config: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag.or(config) {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| CliError::Config(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError> {
    match threads {
        Some(0) => Err(CliError::Config("threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f),
        None => f(),
    }
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load(&args)?;
            let out = args
                .out
                .clone()
                .or_else(|| cfg.output.events.clone())
                .ok_or_else(|| CliError::Config("simulate needs --out or output.events".into()))?;
            let meta = simulate::cmd_simulate(&cfg, &out)?;
            println!("{}", simulate::describe(&meta));
        }
        Command::Fit { events, method, betas, max_iter, config, out, horizon, d } => {
            let config = config.as_deref().map(ExperimentConfig::load).transpose()?;
            let threads = resolve_threads(cli.threads, config.as_ref().and_then(|c| c.threads))?;
            let out_path = out.or_else(|| config.as_ref().and_then(|c| c.output.fit.clone()));
            let req = fit::FitRequest { events, method, betas, max_iter, horizon, d, config };
            let result = in_pool(threads, || fit::cmd_fit(&req))?;
            let mut w = open_out(out_path.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &result)?;
            writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io("<fit output>", e))?;
            if out_path.is_some() {
                println!("{}", fit::describe(&result));
            } else {
                eprintln!("{}", fit::describe(&result));
            }
        }
        Command::Sweep(args) => {
            let cfg = load(&args)?;
            let threads = resolve_threads(cli.threads, cfg.threads)?;
            let rows = in_pool(threads, || sweep::run_sweep(&cfg))?;
            let path = args.out.clone().or_else(|| cfg.output.sweep.clone());
            sweep::write_sweep(&cfg, &rows, open_out(path.as_deref())?)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} of {} rows failed; see the error column", rows.len());
            }
        }
        Command::Bench(args) => {
            let cfg = load(&args)?;
            let threads = resolve_threads(cli.threads, cfg.threads)?;
            let (rows, summaries) = in_pool(threads, || bench::run_bench(&cfg))?;
            let path = args.out.clone().or_else(|| cfg.output.bench.clone());
            bench::write_bench(&cfg, &rows, open_out(path.as_deref())?)?;
            for s in &summaries {
                let totals: Vec<String> =
                    s.totals.iter().map(|(m, secs, nll, ok)| format!("{m}: {secs:.4}s nll={nll:.8e} reached={ok}")).collect();
                eprintln!("seed {} target={:.8e} {}", s.seed, s.target, totals.join("; "));
            }
        }
    }
    Ok(())
}
