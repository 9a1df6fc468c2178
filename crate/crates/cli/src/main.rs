//! `xmr`: Mendelian randomization workflows over summary-statistics files.

mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ConfigError;

#[derive(Parser, Debug)]
#[command(
    name = "xmr",
    version,
    about = "Mendelian randomization for multi-omics summary statistics"
)]
struct Cli {
    /// Seed for every random draw (bootstrap, stochastic search, simulation).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads. Output does not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// key=value file supplying defaults for any flag not given on the command line.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Multivariable transcriptome-wide MR from <stem>.matrix and <stem>.ld.
    Twmr(commands::twmr::TwmrArgs),
    /// Select TWMR instruments and genes from an eQTL panel.
    TwmrSelect(commands::twmr::SelectArgs),
    /// Univariable two-sample MR.
    Mr(commands::mr::MrArgs),
    /// Bayesian model averaging over correlated exposures.
    Bma(commands::bma::BmaArgs),
    /// Greedy LD clumping.
    Clump(commands::clump::ClumpArgs),
    /// Per-protein MR with cis / trans sensitivity analyses.
    PqtlPipeline(commands::pqtl::PqtlArgs),
    /// Two-step MR for methylation mediation.
    Mediate(commands::mediate::MediateArgs),
    /// Write simulated summary statistics with known causal effects.
    Simulate(commands::simulate::SimulateArgs),
}

/// Settings shared by every subcommand.
pub struct Context {
    pub seed: u64,
    pub pool: rayon::ThreadPool,
    /// Effective arguments (after config merging) minus run-only flags.
    pub args: Vec<String>,
}

impl Context {
    /// Maps `f` over `items` on the worker pool, keeping input order.
    pub fn par_map<T: Sync, R: Send>(
        &self,
        items: &[T],
        f: impl Fn(usize, &T) -> R + Sync,
    ) -> Vec<R> {
        use rayon::prelude::*;
        self.pool
            .install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect())
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<xmr_core::Error>() {
            return e.class().exit_code() as u8;
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 6;
        }
    }
    1
}

/// The error chain, skipping causes already spelled out by their parent.
fn render(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}

fn run(raw: Vec<OsString>) -> anyhow::Result<()> {
    let merged = config::merge_config(raw)?;
    let cli = match Cli::try_parse_from(&merged) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.strip_prefix("error: ").unwrap_or(&text).trim_end();
            return Err(ConfigError(text.to_string()).into());
        }
    };
    if cli.jobs == 0 {
        return Err(ConfigError("--jobs must be at least 1".into()).into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| ConfigError(e.to_string()))?;
    let ctx = Context {
        seed: cli.seed,
        pool,
        args: config::recorded_args(&merged),
    };
    match cli.command {
        Command::Twmr(a) => commands::twmr::run(&ctx, a),
        Command::TwmrSelect(a) => commands::twmr::run_select(&ctx, a),
        Command::Mr(a) => commands::mr::run(&ctx, a),
        Command::Bma(a) => commands::bma::run(&ctx, a),
        Command::Clump(a) => commands::clump::run(&ctx, a),
        Command::PqtlPipeline(a) => commands::pqtl::run(&ctx, a),
        Command::Mediate(a) => commands::mediate::run(&ctx, a),
        Command::Simulate(a) => commands::simulate::run(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
