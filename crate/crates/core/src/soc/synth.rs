//! Synthetic data from a SOC model at known parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::filter::{CarbonFilter, SocParticle};
use super::plant::PlantSampler;
use super::process::{CarbonParams, InputParams};
use super::SocModel;
use crate::domain::{Channel, Dataset, ParamKey, ParameterVector, Treatment};
use crate::error::{Error, Result};
use crate::particle::ParticleModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationPlan {
    /// Chance that a year after the first has soil-carbon measurements.
    pub carbon_fraction: f64,
    /// Measure the active crop's plant channels every cropped year.
    pub plant: bool,
    /// Add observation noise; without it observations equal the latent
    /// values exactly.
    pub noise: bool,
    /// Cap on regular-variant redraws when a path breaks the BIO cap.
    pub max_attempts: usize,
}

impl Default for ObservationPlan {
    fn default() -> Self {
        ObservationPlan { carbon_fraction: 1.0, plant: true, noise: true, max_attempts: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthetic {
    pub data: Dataset,
    pub truth: ParameterVector,
    /// Free parameters of the generating model, in `param_names` order.
    pub theta: Vec<f64>,
    /// Latent TOC, `fields x years`.
    pub latent_toc: Vec<Vec<f64>>,
    /// Latent state per field and year.
    pub states: Vec<Vec<SocParticle>>,
}

/// Plant channels measured under `t`.
pub fn crop_channels(t: Treatment) -> &'static [Channel] {
    match t {
        Treatment::WheatGrain => &[Channel::GrainWheat, Channel::Wheat, Channel::Grain, Channel::Straw],
        Treatment::WheatHay => &[Channel::Wheat],
        Treatment::Pasture | Treatment::PastureHay => &[Channel::Pasture],
        Treatment::SorghumGrain => &[Channel::GrainSorghum, Channel::Sorghum],
        Treatment::SorghumHay => &[Channel::Sorghum],
        Treatment::Fallow | Treatment::Cleared => &[],
    }
}

/// Simulates the latent process and the observations of `model`'s schedule
/// at `truth`. Observations already in the model's dataset are discarded.
pub fn generate_synthetic(model: &SocModel, truth: &ParameterVector, plan: &ObservationPlan, seed: u64) -> Result<Synthetic> {
    if !(0.0..=1.0).contains(&plan.carbon_fraction) {
        return Err(Error::config("carbon_fraction must lie in [0, 1]"));
    }
    if !model.is_feasible(truth) {
        return Err(Error::contract("generating parameters violate the transfer constraints"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let variant = model.variant();
    let layout = model.layout();
    let steps = model.data().n_years();
    let n_fields = model.data().n_fields();
    let empty = model.data().without_channels(&Channel::ALL);

    let carbon = CarbonParams::from_theta(variant, truth);
    let inputs = InputParams::from_theta(truth, layout.scheme, model.options().cleared_input);
    let lgm = layout.linear_model(truth, steps)?;
    let mut paths: Vec<Vec<SocParticle>> = Vec::with_capacity(n_fields);
    for f in 0..n_fields {
        let initial = super::process::initial_pools(
            variant,
            truth.get(ParamKey::InitialStock(f)),
            truth.get(ParamKey::Iom),
            &model.options().initial,
        );
        let filter = CarbonFilter::new(
            variant,
            layout,
            &empty,
            f,
            carbon,
            inputs,
            model.options().step_options(),
            PlantSampler::prior(&lgm, steps)?,
            initial,
            &|_| 1.0,
            false,
        );
        let mut z = vec![0.0; filter.noise_dim()];
        let mut draw = |rng: &mut ChaCha8Rng| {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            z.clone()
        };
        let mut path = None;
        for _ in 0..plan.max_attempts.max(1) {
            let mut states = vec![filter.initial(&draw(&mut rng))?];
            for t in 1..steps {
                let next = filter.transition(t, &states[t - 1], &draw(&mut rng))?;
                states.push(next);
            }
            if !states.last().is_some_and(|s| s.violated) {
                path = Some(states);
                break;
            }
        }
        paths.push(path.ok_or_else(|| Error::DegenerateState {
            step: steps.saturating_sub(1),
            message: format!("every simulated path of field {f} broke the BIO carrying capacity"),
        })?);
    }

    let mut data = empty;
    let sd = |k: ParamKey| truth.get(k).sqrt();
    let noisy = |rng: &mut ChaCha8Rng, log_mean: f64, s: f64| {
        if plan.noise {
            (log_mean + s * rng.sample::<f64, _>(StandardNormal)).exp()
        } else {
            log_mean.exp()
        }
    };
    let mut latent_toc = vec![vec![0.0; steps]; n_fields];
    for t in 0..steps {
        let carbon_year = t == 0 || rng.random::<f64>() < plan.carbon_fraction;
        for (f, path) in paths.iter().enumerate() {
            let c = &path[t].state.carbon;
            latent_toc[f][t] = c.total_organic();
            if carbon_year {
                let y = noisy(&mut rng, c.total_organic().ln(), sd(ParamKey::ObsTOC));
                data.set(f, t, Channel::Toc, y)?;
                if variant.is_five_pool() {
                    let y = noisy(&mut rng, c.particulate().ln(), sd(ParamKey::ObsPOC));
                    data.set(f, t, Channel::Poc, y)?;
                    let y = noisy(&mut rng, c.hum.ln(), sd(ParamKey::ObsHUM));
                    data.set(f, t, Channel::Hum, y)?;
                }
            }
            if t == 0 {
                let y = noisy(&mut rng, c.iom.ln(), sd(ParamKey::ObsIOM));
                data.set(f, t, Channel::Iom, y)?;
            }
            if plan.plant {
                for &ch in crop_channels(data.schedule().get(f, t)) {
                    if let Some(j) = layout.slot_of(ch) {
                        let y = noisy(&mut rng, path[t].state.plant.log[j], sd(layout.slots[j].obs_var));
                        data.set(f, t, ch, y)?;
                    }
                }
            }
        }
    }
    Ok(Synthetic { data, truth: truth.clone(), theta: model.theta_of(truth), latent_toc, states: paths })
}
