//! The CLI verbs as library calls.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, SelectMethod};
use super::ingest::{read_observations, read_schedule, write_observations, write_schedule};
use super::report as out;
use crate::cpm::{chain_seed, load_chain, run_chains, ChainOutput};
use crate::diagnostics::{rhat_table, trajectory_quantiles, ParameterDiagnostics};
use crate::domain::{Dataset, ManagementSchedule, ParamKey, ParameterVector};
use crate::error::{Error, Result};
use crate::model::LikelihoodModel;
use crate::selection::{lfo_cv, waic, LfoConfig};
use crate::soc::{generate_synthetic, presets, SocModel};

pub const MANIFEST: &str = "run_manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub verb: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub chain_seeds: Vec<u64>,
    pub artifacts: Vec<String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

/// Loads a TOML config, or the config recorded in a run manifest.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(Manifest::read(path)?.config)
    } else {
        RunConfig::load(path)
    }
}

/// Tracks written artifacts so a failed run can say what it left behind.
struct Run<'a> {
    cfg: &'a RunConfig,
    verb: &'static str,
    artifacts: Vec<String>,
    seeds: Vec<u64>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a RunConfig, verb: &'static str) -> Result<Self> {
        std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
        Ok(Run { cfg, verb, artifacts: Vec::new(), seeds: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.cfg.output.join(name)
    }

    fn finish(&self, outcome: &Result<()>) -> Result<()> {
        let m = Manifest {
            tool: "soc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            verb: self.verb.into(),
            status: if outcome.is_ok() { "complete" } else { "partial" }.into(),
            error: outcome.as_ref().err().map(|e| e.to_string()),
            chain_seeds: self.seeds.clone(),
            artifacts: self.artifacts.clone(),
            config: self.cfg.clone(),
        };
        let path = self.cfg.output.join(MANIFEST);
        let text = serde_json::to_string_pretty(&m).map_err(|e| Error::data(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

fn with_run(cfg: &RunConfig, verb: &'static str, body: impl FnOnce(&mut Run) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    let mut run = Run::new(cfg, verb)?;
    let outcome = body(&mut run);
    run.finish(&outcome)?;
    outcome
}

fn preset_fields(cfg: &RunConfig, schedule: &ManagementSchedule) -> Result<Vec<String>> {
    match &cfg.simulate.fields {
        Some(f) if f.len() == schedule.n_fields() => Ok(f.clone()),
        Some(f) => Err(Error::config(format!("{} field names for a {}-field schedule", f.len(), schedule.n_fields()))),
        None => Ok((1..=schedule.n_fields()).map(|i| i.to_string()).collect()),
    }
}

fn schedule(cfg: &RunConfig) -> Result<(Vec<String>, ManagementSchedule)> {
    match &cfg.schedule {
        Some(p) => read_schedule(p),
        None => {
            let s = presets::schedule(cfg.site);
            Ok((preset_fields(cfg, &s)?, s))
        }
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let (fields, sched) = schedule(cfg)?;
    let Some(path) = &cfg.data else {
        return Err(Error::config("no data file configured; set `data` or run `simulate` first"));
    };
    let data = read_observations(path, fields, sched)?;
    let needed = cfg.model.carbon_channels();
    if !needed.iter().all(|c| data.channels_present().contains(c)) {
        let names: Vec<String> = needed.iter().map(|c| c.to_string()).collect();
        return Err(Error::data(format!("model {} needs channels {}", cfg.model, names.join(", "))));
    }
    Ok(data)
}

pub fn build_model(cfg: &RunConfig, data: Dataset) -> Result<SocModel> {
    let mut model = SocModel::new(cfg.model, cfg.site, data, cfg.soc.clone())?;
    for (name, prior) in &cfg.priors {
        model.set_prior(name.parse()?, prior.clone())?;
    }
    Ok(model)
}

fn chain_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.join("chains")
}

fn read_chains(cfg: &RunConfig) -> Result<Vec<ChainOutput>> {
    let dir = chain_dir(cfg);
    (0..cfg.sampler.chains).map(|k| load_chain(&dir.join(format!("chain_{k}.ckpt")))).collect()
}

fn diagnostics(model: &SocModel, chains: &[ChainOutput]) -> Result<Option<Vec<ParameterDiagnostics>>> {
    if chains.len() < 2 {
        log::warn!("R-hat needs at least two chains; skipping");
        return Ok(None);
    }
    rhat_table(chains, &model.transforms()).map(Some)
}

fn write_chain_reports(run: &mut Run, model: &SocModel, chains: &[ChainOutput]) -> Result<()> {
    out::write_posterior(&run.path("posterior_theta.csv"), chains)?;
    out::write_summary(&run.path("posterior_summary.csv"), chains)?;
    if chains.iter().any(|c| c.draws.iter().any(|d| d.trajectory.is_some())) {
        let q = trajectory_quantiles(chains, &model.trajectory_labels())?;
        out::write_trajectories(&run.path("trajectories_quantiles.csv"), &q, model.data())?;
        if chains.iter().map(|c| c.draws.len()).sum::<usize>() >= 2 && model.data().n_years() > 1 {
            out::write_soc_change(&run.path("soc_change.csv"), chains, model.data())?;
        }
    }
    if let Some(rows) = diagnostics(model, chains)? {
        out::write_rhat(&run.path("rhat.csv"), &rows)?;
    }
    Ok(())
}

fn run_selection(run: &mut Run, model: &SocModel, chains: Option<&[ChainOutput]>) -> Result<()> {
    let cfg = run.cfg;
    match cfg.select {
        SelectMethod::None => Ok(()),
        SelectMethod::Waic => {
            let owned;
            let chains = match chains {
                Some(c) => c,
                None => {
                    owned = read_chains(cfg)?;
                    &owned
                }
            };
            out::write_waic(&run.path("waic.csv"), &waic(chains)?)
        }
        SelectMethod::LfoCv => {
            let lfo = LfoConfig {
                min_observations: cfg.lfo.min_obs,
                sampler: cfg.sampler.clone(),
                predictive_draws: cfg.lfo.predictive_draws,
                rhat_threshold: cfg.lfo.rhat_threshold,
            };
            let r = lfo_cv(model, &lfo)?;
            out::write_elpd(&run.path("elpd.csv"), &r)?;
            out::write_elpd_steps(&run.path("elpd_steps.csv"), &r, model.data())
        }
    }
}

/// Runs the chains, writes posterior summaries and diagnostics, then the
/// configured selection criterion.
pub fn fit(cfg: &RunConfig, resume: bool) -> Result<()> {
    with_run(cfg, "fit", |run| {
        let model = build_model(cfg, load_dataset(cfg)?)?;
        run.seeds = (0..cfg.sampler.chains).map(|k| chain_seed(cfg.sampler.seed, k)).collect();
        log::info!("fitting {} on {} fields x {} years", cfg.model, model.data().n_fields(), model.data().n_years());
        let dir = chain_dir(cfg);
        for k in 0..cfg.sampler.chains {
            run.artifacts.push(format!("chains/chain_{k}.ckpt"));
        }
        let chains = run_chains(&model, &cfg.sampler, Some(&dir), resume)?;
        for c in &chains {
            log::info!(
                "chain {}: acceptance {:.3}, {} estimator failures",
                c.chain + 1,
                c.acceptance_rate(),
                c.estimator_failures
            );
        }
        write_chain_reports(run, &model, &chains)?;
        run_selection(run, &model, Some(&chains))
    })
}

/// Selection only: WAIC from stored chains, or a fresh LFO-CV.
pub fn select(cfg: &RunConfig) -> Result<()> {
    with_run(cfg, "select", |run| {
        let model = build_model(cfg, load_dataset(cfg)?)?;
        if cfg.select == SelectMethod::None {
            return Err(Error::config("select needs `select = \"waic\"` or `\"lfo-cv\"`"));
        }
        run_selection(run, &model, None)
    })
}

pub fn diagnose(cfg: &RunConfig) -> Result<Vec<ParameterDiagnostics>> {
    let mut out = Vec::new();
    with_run(cfg, "diagnose", |run| {
        let model = build_model(cfg, load_dataset(cfg)?)?;
        let chains = read_chains(cfg)?;
        let rows = diagnostics(&model, &chains)?.ok_or_else(|| Error::config("diagnose needs at least two chains"))?;
        out::write_rhat(&run.path("rhat.csv"), &rows)?;
        out = rows;
        Ok(())
    })?;
    Ok(out)
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    with_run(cfg, "report", |run| {
        let model = build_model(cfg, load_dataset(cfg)?)?;
        let chains = read_chains(cfg)?;
        write_chain_reports(run, &model, &chains)
    })
}

/// Truth for `simulate`: a prior draw with the configured values on top.
pub fn simulation_truth(cfg: &RunConfig, model: &SocModel) -> Result<ParameterVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.simulate.prior_seed);
    let mut pv = model.parameter_vector(&model.sample_prior(&mut rng));
    for (name, v) in &cfg.simulate.truth {
        let k: ParamKey = name.parse()?;
        if model.priors().get(k).is_none() {
            return Err(Error::config(format!("{name} is not a parameter of {}", cfg.model)));
        }
        pv.set(k, *v);
    }
    Ok(pv)
}

/// Writes synthetic observations, the schedule, the generating parameters
/// and the latent TOC path.
pub fn simulate(cfg: &RunConfig) -> Result<()> {
    with_run(cfg, "simulate", |run| {
        let (fields, sched) = schedule(cfg)?;
        let model = build_model(cfg, Dataset::new(fields, sched)?)?;
        let truth = simulation_truth(cfg, &model)?;
        let syn = generate_synthetic(&model, &truth, &cfg.simulate.plan(), cfg.simulate.seed)?;
        write_observations(&run.path("observations.csv"), &syn.data)?;
        write_schedule(&run.path("schedule.csv"), &syn.data)?;
        let rows: Vec<(String, f64)> =
            model.priors().entries().iter().map(|(k, _)| (k.to_string(), truth.get(*k))).collect();
        out::write_pairs(&run.path("truth.csv"), ["parameter", "value"], &rows)?;
        let latent: Vec<(String, f64)> = syn
            .latent_toc
            .iter()
            .enumerate()
            .flat_map(|(f, path)| {
                let data = &syn.data;
                path.iter().enumerate().map(move |(t, v)| (format!("{},{}", data.fields()[f], data.year(t)), *v))
            })
            .collect();
        let path = run.path("latent_toc.csv");
        out::write_pairs(&path, ["field,year", "toc"], &latent)
    })
}
