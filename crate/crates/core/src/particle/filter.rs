//! Bootstrap and fixed-random-number particle filters sharing one engine.

use rand::{Rng, RngCore};
use rayon::prelude::*;

use super::resample::{multinomial_resample, systematic_resample};
use crate::domain::{RandomStream, StreamLayout};
use crate::error::{Error, Result};

/// A state-space model a particle filter can run on.
///
/// Steps are numbered from 0; step 0 is drawn from the initial law, later
/// steps from the transition. All randomness comes in through `noise`, a
/// slice of `noise_dim()` standard normals, so a filter driven by a fixed
/// stream is deterministic.
pub trait ParticleModel: Sync {
    type State: Clone + Send + Sync;

    fn steps(&self) -> usize;

    fn noise_dim(&self) -> usize;

    fn initial(&self, noise: &[f64]) -> Result<Self::State>;

    fn transition(&self, t: usize, prev: &Self::State, noise: &[f64]) -> Result<Self::State>;

    fn is_observed(&self, t: usize) -> bool;

    /// `log p(Y_t | state)`; only called when `is_observed(t)`.
    fn log_weight(&self, t: usize, state: &Self::State) -> f64;

    /// Scalar projection used to order particles before systematic resampling.
    fn sort_key(&self, state: &Self::State) -> f64;

    /// Length of the per-particle summary kept for ancestral trajectories.
    fn summary_dim(&self) -> usize {
        0
    }

    fn summarize(&self, _state: &Self::State, _out: &mut [f64]) {}

    fn layout(&self, particles: usize) -> StreamLayout {
        StreamLayout::new(self.steps(), particles, self.noise_dim())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterOptions {
    /// Sort particles by `sort_key` before resampling.
    pub sort: bool,
    /// Resample only when ESS drops below this fraction of N. `None`
    /// resamples at every observed step.
    pub ess_threshold: Option<f64>,
    /// Keep per-step summaries and ancestry to return one trajectory.
    pub keep_trajectory: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions { sort: true, ess_threshold: None, keep_trajectory: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterOutput {
    pub log_likelihood: f64,
    /// `l_t` per step; zero at steps without observations.
    pub increments: Vec<f64>,
    /// Summaries along one ancestral line, `steps x summary_dim`.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

enum Resampler<'a> {
    Systematic(&'a RandomStream),
    Multinomial(&'a mut dyn RngCore),
}

impl Resampler<'_> {
    fn resample(&mut self, t: usize, weights: &[f64]) -> Result<Vec<usize>> {
        match self {
            Resampler::Systematic(stream) => systematic_resample(weights, stream.resampling_uniform(t)),
            Resampler::Multinomial(rng) => multinomial_resample(weights, rng),
        }
    }

    fn final_uniform(&mut self) -> f64 {
        match self {
            Resampler::Systematic(stream) => stream.trajectory_uniform(),
            Resampler::Multinomial(rng) => rng.random(),
        }
    }
}

const PAR_MIN_LEN: usize = 512;

fn propagate<M: ParticleModel>(
    model: &M,
    t: usize,
    prev: Option<&[M::State]>,
    stream: &RandomStream,
    n: usize,
) -> Result<Vec<M::State>> {
    (0..n)
        .into_par_iter()
        .with_min_len(PAR_MIN_LEN)
        .map(|k| {
            let noise = stream.noise(t, k);
            match prev {
                None => model.initial(noise),
                Some(p) => model.transition(t, &p[k], noise),
            }
        })
        .collect()
}

fn run<M: ParticleModel>(
    model: &M,
    stream: &RandomStream,
    mut resampler: Resampler<'_>,
    options: FilterOptions,
) -> Result<FilterOutput> {
    let layout = stream.layout();
    let n = layout.particles;
    if n == 0 {
        return Err(Error::contract("a particle filter needs at least one particle"));
    }
    let steps = model.steps();
    stream.check_covers(model.layout(n))?;

    let sd = model.summary_dim();
    let keep = options.keep_trajectory && sd > 0;
    let mut summaries: Vec<Vec<f64>> = Vec::new();
    let mut parents: Vec<Vec<usize>> = Vec::new();
    let mut origin: Vec<usize> = (0..n).collect();

    let mut out = FilterOutput { increments: Vec::with_capacity(steps), ..Default::default() };
    let mut particles: Vec<M::State> = Vec::new();
    // Log weights carried from unresampled steps (all zero after a resample).
    let mut carried = vec![0.0; n];
    let mut current_logw = vec![0.0; n];

    for t in 0..steps {
        particles = if t == 0 {
            propagate(model, 0, None, stream, n)?
        } else {
            propagate(model, t, Some(&particles), stream, n)?
        };

        if keep {
            let mut buf = vec![0.0; n * sd];
            for (k, p) in particles.iter().enumerate() {
                model.summarize(p, &mut buf[k * sd..(k + 1) * sd]);
            }
            summaries.push(buf);
            parents.push(if t == 0 { (0..n).collect() } else { origin.clone() });
        }
        origin = (0..n).collect();

        if !model.is_observed(t) {
            out.increments.push(0.0);
            current_logw.clone_from(&carried);
            continue;
        }

        let obs: Vec<f64> =
            particles.par_iter().with_min_len(PAR_MIN_LEN).map(|p| model.log_weight(t, p)).collect();
        let total: Vec<f64> = obs.iter().zip(&carried).map(|(o, c)| o + c).collect();
        let max = total.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max.is_nan() {
            return Err(Error::ParticleDegeneracy { step: t });
        }
        let w: Vec<f64> = total.iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = w.iter().sum();

        let prev_max = carried.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let prev_sum: f64 = carried.iter().map(|c| (c - prev_max).exp()).sum();
        let increment = (max + sum.ln()) - (prev_max + prev_sum.ln());
        out.increments.push(increment);
        out.log_likelihood += increment;

        let normalized: Vec<f64> = w.iter().map(|x| x / sum).collect();
        current_logw = normalized.iter().map(|x| x.ln()).collect();

        let do_resample = match options.ess_threshold {
            None => true,
            Some(th) => {
                let ess = 1.0 / normalized.iter().map(|x| x * x).sum::<f64>();
                ess < th * n as f64
            }
        };
        if do_resample {
            let order: Vec<usize> = if options.sort {
                let keys: Vec<f64> = particles.iter().map(|p| model.sort_key(p)).collect();
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
                order
            } else {
                (0..n).collect()
            };
            let sorted_w: Vec<f64> = order.iter().map(|&i| normalized[i]).collect();
            let idx = resampler.resample(t, &sorted_w)?;
            origin = idx.iter().map(|&i| order[i]).collect();
            particles = origin.iter().map(|&i| particles[i].clone()).collect();
            carried.iter_mut().for_each(|c| *c = 0.0);
        } else {
            carried.clone_from(&current_logw);
        }
    }

    if keep && steps > 0 {
        let max = current_logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = current_logw.iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = w.iter().sum();
        let u = resampler.final_uniform() * sum;
        let mut k = n - 1;
        let mut cum = 0.0;
        for (i, wi) in w.iter().enumerate() {
            cum += wi;
            if u < cum {
                k = i;
                break;
            }
        }
        let mut traj = vec![Vec::new(); steps];
        for t in (0..steps).rev() {
            traj[t] = summaries[t][k * sd..(k + 1) * sd].to_vec();
            k = parents[t][k];
        }
        out.trajectory = Some(traj);
    }
    Ok(out)
}

/// Particle filter driven by a fixed auxiliary stream: all propagation noise
/// comes from `U`, resampling is systematic with uniforms derived from `V`,
/// and particles are sorted before each resampling step. The result is a
/// deterministic function of `(model, stream)`.
pub fn correlated_particle_filter<M: ParticleModel>(
    model: &M,
    stream: &RandomStream,
    options: FilterOptions,
) -> Result<FilterOutput> {
    run(model, stream, Resampler::Systematic(stream), options)
}

/// Classic bootstrap filter: fresh noise and multinomial resampling from `rng`.
pub fn bootstrap_filter<M: ParticleModel, R: RngCore>(
    model: &M,
    particles: usize,
    rng: &mut R,
    keep_trajectory: bool,
) -> Result<FilterOutput> {
    let stream = RandomStream::sample(model.layout(particles), rng);
    let options = FilterOptions { sort: false, ess_threshold: None, keep_trajectory };
    run(model, &stream, Resampler::Multinomial(rng), options)
}
