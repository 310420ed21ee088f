//! The carbon pools of one field as a particle model. Fields are
//! independent given the parameters, so each gets its own filter and the
//! likelihood is the product. Plant states come from their exact
//! conditional sampler, so only carbon observations weight particles unless
//! the plant block is pushed into the filter as well.

use super::plant::{PlantLayout, PlantSampler};
use super::process::{carbon_input, step, CarbonParams, InputParams, StepOptions};
use crate::domain::{CarbonPools, Channel, Dataset, FieldState, ModelVariant, StreamLayout};
use crate::error::{Error, Result};
use crate::linalg::LN_2PI;
use crate::particle::ParticleModel;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SocParticle {
    pub state: FieldState,
    /// Set once a regular-variant particle breaks the BIO cap; such a
    /// particle gets zero weight at the next observed step.
    pub violated: bool,
}

#[derive(Clone, Copy, Debug)]
enum Target {
    Toc,
    Poc,
    Hum,
    Plant(usize),
}

#[derive(Clone, Copy, Debug)]
struct Obs {
    target: Target,
    log_y: f64,
    sd: f64,
    /// `-log y - log sd - log(2 pi) / 2`.
    norm: f64,
}

pub(crate) struct CarbonFilter<'a> {
    pub variant: ModelVariant,
    pub layout: &'a PlantLayout,
    pub data: &'a Dataset,
    pub field: usize,
    pub carbon: CarbonParams,
    pub inputs: InputParams,
    pub step_options: StepOptions,
    pub sampler: PlantSampler,
    pub initial: CarbonPools,
    obs: Vec<Vec<Obs>>,
}

fn obs_entry(target: Target, y: f64, var: f64) -> Obs {
    let sd = var.sqrt();
    Obs { target, log_y: y.ln(), sd, norm: -y.ln() - sd.ln() - 0.5 * LN_2PI }
}

impl<'a> CarbonFilter<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: ModelVariant,
        layout: &'a PlantLayout,
        data: &'a Dataset,
        field: usize,
        carbon: CarbonParams,
        inputs: InputParams,
        step_options: StepOptions,
        sampler: PlantSampler,
        initial: CarbonPools,
        obs_var: &dyn Fn(Channel) -> f64,
        plant_weights: bool,
    ) -> Self {
        let mut obs = vec![Vec::new(); data.n_years()];
        for (t, row) in obs.iter_mut().enumerate() {
            let mut push = |ch: Channel, target| {
                if let Some(y) = data.get(field, t, ch) {
                    row.push(obs_entry(target, y, obs_var(ch)));
                }
            };
            push(Channel::Toc, Target::Toc);
            if variant.is_five_pool() {
                push(Channel::Poc, Target::Poc);
                push(Channel::Hum, Target::Hum);
            }
            if plant_weights {
                for (j, s) in layout.slots.iter().enumerate() {
                    push(s.channel, Target::Plant(j));
                }
            }
        }
        CarbonFilter { variant, layout, data, field, carbon, inputs, step_options, sampler, initial, obs }
    }

    fn n_dyn(&self) -> usize {
        self.variant.dynamic_pools().len()
    }

    fn per_field(&self) -> usize {
        self.layout.dim() + self.n_dyn()
    }

    fn at_step(e: Error, t: usize) -> Error {
        match e {
            Error::DegenerateState { message, .. } => Error::DegenerateState { step: t, message },
            other => other,
        }
    }
}

impl ParticleModel for CarbonFilter<'_> {
    type State = SocParticle;

    fn steps(&self) -> usize {
        self.data.n_years()
    }

    fn noise_dim(&self) -> usize {
        self.per_field()
    }

    fn initial(&self, noise: &[f64]) -> Result<SocParticle> {
        let mut p = SocParticle::default();
        p.state.plant.log = self.sampler.sample(0, &p.state.plant.log, &noise[..self.layout.dim()]);
        p.state.carbon = self.initial;
        Ok(p)
    }

    fn transition(&self, t: usize, prev: &SocParticle, noise: &[f64]) -> Result<SocParticle> {
        let d = self.layout.dim();
        let mut p = *prev;
        p.state.plant.log = self.sampler.sample(t, &prev.state.plant.log, &noise[..d]);
        let masses = self.layout.masses(&p.state.plant.log[..d]);
        let input = carbon_input(self.data.schedule().get(self.field, t), &masses, &self.inputs)?;
        p.state.carbon = step(self.variant, &self.carbon, &prev.state.carbon, input, &noise[d..], &self.step_options)
            .map_err(|e| Self::at_step(e, t))?;
        if !self.variant.is_biok() && p.state.carbon.bio > self.step_options.kappa * p.state.carbon.decomposable_total() {
            p.violated = true;
        }
        Ok(p)
    }

    fn is_observed(&self, t: usize) -> bool {
        !self.obs[t].is_empty()
    }

    fn log_weight(&self, t: usize, s: &SocParticle) -> f64 {
        if s.violated {
            return f64::NEG_INFINITY;
        }
        let c = &s.state.carbon;
        let mut ll = 0.0;
        for o in &self.obs[t] {
            let pred = match o.target {
                Target::Toc => c.total_organic().ln(),
                Target::Poc => c.particulate().ln(),
                Target::Hum => c.hum.ln(),
                Target::Plant(j) => s.state.plant.log[j],
            };
            let r = (o.log_y - pred) / o.sd;
            ll += o.norm - 0.5 * r * r;
        }
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll
        }
    }

    fn sort_key(&self, s: &SocParticle) -> f64 {
        s.state.carbon.decomposable_total()
    }

    fn summary_dim(&self) -> usize {
        1
    }

    fn summarize(&self, s: &SocParticle, out: &mut [f64]) {
        out[0] = s.state.carbon.total_organic();
    }

    fn layout(&self, particles: usize) -> StreamLayout {
        StreamLayout::new(self.steps(), particles, self.noise_dim())
    }
}
