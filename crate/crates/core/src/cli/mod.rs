//! Command-line front end: `soc fit | select | simulate | diagnose | report`.

pub mod config;
pub mod ingest;
pub mod report;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{LfoSettings, RunConfig, SelectMethod, SimulateSettings};
pub use ingest::{ingest_dataset, read_observations, read_schedule, write_observations, write_schedule};
pub use run::{build_model, diagnose, fit, load_config, load_dataset, report, select, simulate, Manifest, MANIFEST};

use crate::domain::ModelVariant;
use crate::error::{Error, Result};
use crate::soc::Site;

/// Bayesian soil organic carbon models fitted by correlated pseudo-marginal MCMC.
#[derive(Debug, Parser)]
#[command(name = "soc", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the chains and write posterior summaries, diagnostics and the selection criterion.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Continue from the checkpoints in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Model selection only (WAIC from stored chains, or LFO-CV).
    Select(Common),
    /// Write synthetic observations from the configured model.
    Simulate(Common),
    /// R-hat table from stored chains.
    Diagnose(Common),
    /// Posterior summaries and trajectory quantiles from stored chains.
    Report(Common),
}

/// Config file plus flags that override its keys.
#[derive(Debug, Args)]
pub struct Common {
    /// TOML config, or the run_manifest.json of an earlier run.
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long)]
    pub model: Option<ModelVariant>,
    #[arg(long)]
    pub site: Option<Site>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub select: Option<SelectMethod>,
    #[arg(long)]
    pub min_obs: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub particles: Option<usize>,
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = load_config(&self.config)?;
        macro_rules! over {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$($field).+ = v; })*
            };
        }
        over!(
            model => model,
            site => site,
            output => output,
            select => select,
            min_obs => lfo.min_obs,
            iterations => sampler.iterations,
            burn_in => sampler.burn_in,
            thin => sampler.thin,
            chains => sampler.chains,
            seed => sampler.seed,
            particles => soc.particles,
        );
        if let Some(p) = &self.data {
            c.data = Some(p.clone());
        }
        if let Some(p) = &self.schedule {
            c.schedule = Some(p.clone());
        }
        Ok(c)
    }
}

/// Thread count from `SOC_THREADS`, else the config, else rayon's default.
fn init_threads(cfg: &RunConfig) -> Result<()> {
    let n = match std::env::var("SOC_THREADS") {
        Ok(v) => Some(v.parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(|| {
            Error::config(format!("SOC_THREADS must be a positive integer, got '{v}'"))
        })?),
        Err(_) => cfg.threads,
    };
    if let Some(n) = n {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Fit { common, .. } => common,
        Command::Select(c) | Command::Simulate(c) | Command::Diagnose(c) | Command::Report(c) => c,
    };
    let cfg = common.resolve()?;
    init_threads(&cfg)?;
    match cli.command {
        Command::Fit { resume, .. } => fit(&cfg, resume),
        Command::Select(_) => select(&cfg),
        Command::Simulate(_) => simulate(&cfg),
        Command::Diagnose(_) => {
            let rows = diagnose(&cfg)?;
            println!("{:<16} {:>10} {:>10}", "parameter", "rhat", "upper_ci");
            for r in rows {
                println!("{:<16} {:>10.4} {:>10.4}", r.parameter, r.rhat, r.upper_ci);
            }
            Ok(())
        }
        Command::Report(_) => report(&cfg),
    }
}
