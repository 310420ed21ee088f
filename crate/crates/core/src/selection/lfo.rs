//! Exact leave-future-out cross-validation: one sampler refit per scored
//! observation, never using importance-sampling shortcuts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpm::{chain_seed, run_chains, SamplerConfig};
use crate::diagnostics::gelman_rubin;
use crate::domain::RandomStream;
use crate::error::{Error, Result};
use crate::linalg::log_mean_exp;
use crate::model::LikelihoodModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfoConfig {
    /// Observed steps conditioned on before the first scored one.
    pub min_observations: usize,
    pub sampler: SamplerConfig,
    /// Posterior draws per chain used for each predictive density
    /// (0: every retained draw).
    pub predictive_draws: usize,
    /// Refits with any R-hat at or above this are flagged.
    pub rhat_threshold: f64,
}

impl Default for LfoConfig {
    fn default() -> Self {
        LfoConfig { min_observations: 3, sampler: SamplerConfig::default(), predictive_draws: 0, rhat_threshold: 1.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElpdStep {
    /// Time step being predicted.
    pub step: usize,
    /// Log predictive density from each chain's draws.
    pub per_chain: Vec<f64>,
    /// Log predictive density from all draws pooled.
    pub pooled: f64,
    pub max_rhat: f64,
    pub converged: bool,
    pub failed_evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElpdResult {
    pub steps: Vec<ElpdStep>,
    pub total: f64,
    pub per_chain_total: Vec<f64>,
    pub chain_mean: f64,
    pub chain_sd: f64,
    pub converged: bool,
}

pub fn lfo_cv<M: LikelihoodModel>(model: &M, config: &LfoConfig) -> Result<ElpdResult> {
    config.sampler.validate()?;
    let obs = model.observed_steps();
    let l = config.min_observations;
    if l == 0 || l >= obs.len() {
        return Err(Error::config(format!(
            "min_observations must lie in 1..{} for {} observed steps",
            obs.len(),
            obs.len()
        )));
    }
    let steps = (l..obs.len())
        .into_par_iter()
        .map(|k| score(model, config, obs[k - 1], obs[k], k))
        .collect::<Result<Vec<_>>>()?;
    let chains = config.sampler.chains;
    let per_chain_total: Vec<f64> =
        (0..chains).map(|c| steps.iter().map(|s| s.per_chain[c]).sum()).collect();
    let chain_mean = per_chain_total.iter().sum::<f64>() / chains as f64;
    let chain_sd = if chains > 1 {
        (per_chain_total.iter().map(|x| (x - chain_mean).powi(2)).sum::<f64>() / (chains - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(ElpdResult {
        total: steps.iter().map(|s| s.pooled).sum(),
        converged: steps.iter().all(|s| s.converged),
        steps,
        per_chain_total,
        chain_mean,
        chain_sd,
    })
}

fn score<M: LikelihoodModel>(model: &M, config: &LfoConfig, last: usize, target: usize, fold: usize) -> Result<ElpdStep> {
    let fit_model = model.truncated(last)?;
    let mut sampler = config.sampler.clone();
    sampler.seed = chain_seed(config.sampler.seed, 1000 + fold);
    sampler.keep_trajectories = false;
    let fit = run_chains(&fit_model, &sampler, None, false)?;
    let mut max_rhat = if fit.len() > 1 { 1.0f64 } else { f64::NAN };
    if fit.len() > 1 {
        let n = fit.iter().map(|c| c.draws.len()).min().unwrap_or(0);
        for j in 0..fit[0].param_names.len() {
            let cols: Vec<Vec<f64>> = fit.iter().map(|c| c.column(j)[..n].to_vec()).collect();
            max_rhat = max_rhat.max(gelman_rubin(&cols)?.point);
        }
    }
    let pred_model = model.truncated(target)?;
    let layout = pred_model.stream_layout();
    let mut failed = 0;
    let mut pooled = Vec::new();
    let mut per_chain = Vec::with_capacity(fit.len());
    for chain in &fit {
        let take = match config.predictive_draws {
            0 => chain.draws.len(),
            j => j.min(chain.draws.len()),
        };
        let stride = (chain.draws.len() / take.max(1)).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(chain_seed(sampler.seed ^ 0x5EED_1F0F, chain.chain));
        let mut vals = Vec::with_capacity(take);
        for d in chain.draws.iter().step_by(stride).take(take) {
            let stream = RandomStream::sample(layout, &mut rng);
            match pred_model.log_predictive(&d.theta, target, &stream) {
                Ok(v) => vals.push(v),
                Err(e) if e.is_estimator_failure() => {
                    failed += 1;
                    vals.push(f64::NEG_INFINITY);
                }
                Err(e) => return Err(e),
            }
        }
        per_chain.push(log_mean_exp(&vals));
        pooled.extend(vals);
    }
    Ok(ElpdStep {
        step: target,
        per_chain,
        pooled: log_mean_exp(&pooled),
        converged: !(max_rhat >= config.rhat_threshold),
        max_rhat,
        failed_evaluations: failed,
    })
}
