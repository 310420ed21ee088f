use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{read_checkpoint, CheckpointWriter};
use super::{ChainOutput, Draw, SamplerConfig};
use crate::domain::RandomStream;
use crate::error::{Error, Result};
use crate::model::{Estimate, LikelihoodModel, Transform};

/// Seed of chain `chain` derived from the run seed.
pub fn chain_seed(seed: u64, chain: usize) -> u64 {
    seed.wrapping_add((chain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Proposal tuning carried through burn-in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Adaptation {
    log_scale: f64,
    /// Lower-triangular proposal factor, row-major `d x d`.
    factor: Vec<f64>,
    n: usize,
    mean: Vec<f64>,
    /// Running sum of outer products of deviations, row-major `d x d`.
    m2: Vec<f64>,
    since_update: usize,
}

impl Adaptation {
    fn new(spread: &[f64]) -> Self {
        let d = spread.len();
        let mut factor = vec![0.0; d * d];
        for (i, s) in spread.iter().enumerate() {
            factor[i * d + i] = *s;
        }
        Adaptation { log_scale: 0.0, factor, n: 0, mean: vec![0.0; d], m2: vec![0.0; d * d], since_update: 0 }
    }

    fn step(&self, z: &[f64]) -> Vec<f64> {
        let d = z.len();
        let s = self.log_scale.exp();
        (0..d).map(|i| s * (0..=i).map(|j| self.factor[i * d + j] * z[j]).sum::<f64>()).collect()
    }

    fn observe(&mut self, y: &[f64]) {
        let d = y.len();
        self.n += 1;
        let n = self.n as f64;
        let delta: Vec<f64> = y.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / n;
        }
        for i in 0..d {
            for j in 0..d {
                self.m2[i * d + j] += delta[i] * (y[j] - self.mean[j]);
            }
        }
    }

    /// Replaces the proposal factor by the scaled Cholesky factor of the
    /// empirical covariance gathered so far.
    fn refresh_factor(&mut self) {
        let d = self.mean.len();
        if self.n < 2 * d + 10 {
            return;
        }
        let mut cov = DMatrix::from_row_slice(d, d, &self.m2) / (self.n as f64 - 1.0);
        let ridge = 1e-10 + 1e-8 * cov.diagonal().iter().copied().fold(0.0, f64::max);
        for i in 0..d {
            cov[(i, i)] += ridge;
        }
        if let Some(chol) = cov.cholesky() {
            let l = chol.l() * (2.38 / (d as f64).sqrt());
            for i in 0..d {
                for j in 0..d {
                    self.factor[i * d + j] = l[(i, j)];
                }
            }
            self.log_scale = 0.0;
            self.since_update = 0;
        }
    }
}

/// Everything needed to continue a chain bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    /// Completed iterations.
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub unconstrained: Vec<f64>,
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub log_jacobian: f64,
    pub estimate: Estimate,
    pub stream: RandomStream,
    #[serde(with = "rng_state")]
    pub rng: ChaCha8Rng,
    adaptation: Adaptation,
    pub accepted: usize,
    pub accepted_after_burn_in: usize,
    pub estimator_failures: usize,
    pub stream_refreshes: usize,
    pub trace: Vec<f64>,
}

/// ChaCha position as plain integers; the derived encoding uses a `u128`
/// that tagged JSON records cannot carry.
mod rng_state {
    use rand_chacha::ChaCha8Rng;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        seed: [u8; 32],
        stream: u64,
        word_pos_hi: u64,
        word_pos_lo: u64,
    }

    pub fn serialize<S: Serializer>(rng: &ChaCha8Rng, s: S) -> Result<S::Ok, S::Error> {
        let pos = rng.get_word_pos();
        Repr { seed: rng.get_seed(), stream: rng.get_stream(), word_pos_hi: (pos >> 64) as u64, word_pos_lo: pos as u64 }
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ChaCha8Rng, D::Error> {
        use rand::SeedableRng;
        let r = Repr::deserialize(d)?;
        let mut rng = ChaCha8Rng::from_seed(r.seed);
        rng.set_stream(r.stream);
        rng.set_word_pos(((r.word_pos_hi as u128) << 64) | r.word_pos_lo as u128);
        Ok(rng)
    }
}

fn to_unconstrained(transforms: &[Transform], theta: &[f64]) -> Vec<f64> {
    transforms.iter().zip(theta).map(|(t, x)| t.to_unconstrained(*x)).collect()
}

fn log_jacobian(transforms: &[Transform], y: &[f64]) -> f64 {
    transforms.iter().zip(y).map(|(t, v)| t.log_jacobian(*v)).sum()
}

/// Spread of each parameter's prior on the unconstrained scale.
fn prior_spread<M: LikelihoodModel>(model: &M, transforms: &[Transform], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = transforms.len();
    let draws: Vec<Vec<f64>> = (0..200).map(|_| to_unconstrained(transforms, &model.sample_prior(rng))).collect();
    (0..d)
        .map(|j| {
            let xs: Vec<f64> = draws.iter().map(|y| y[j]).filter(|v| v.is_finite()).collect();
            if xs.len() < 2 {
                return 1.0;
            }
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            let sd = v.sqrt();
            if sd.is_finite() && sd > 1e-8 {
                sd
            } else {
                1e-3
            }
        })
        .collect()
}

fn initialize<M: LikelihoodModel>(model: &M, config: &SamplerConfig, seed: u64) -> Result<ChainState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let transforms = model.transforms();
    let layout = model.stream_layout();
    let spread = prior_spread(model, &transforms, &mut rng);
    let step: Vec<f64> = spread.iter().map(|s| s * config.initial_step).collect();

    let mut last_err = None;
    for _ in 0..config.max_init_attempts {
        let theta = model.sample_prior(&mut rng);
        let log_prior = model.log_prior(&theta);
        if !log_prior.is_finite() {
            continue;
        }
        let stream = RandomStream::sample(layout, &mut rng);
        match model.estimate(&theta, &stream, config.keep_trajectories) {
            Ok(est) if est.log_likelihood.is_finite() => {
                let y = to_unconstrained(&transforms, &theta);
                return Ok(ChainState {
                    iteration: 0,
                    log_jacobian: log_jacobian(&transforms, &y),
                    unconstrained: y,
                    theta,
                    log_likelihood: est.log_likelihood,
                    log_prior,
                    estimate: est,
                    stream,
                    rng,
                    adaptation: Adaptation::new(&step),
                    accepted: 0,
                    accepted_after_burn_in: 0,
                    estimator_failures: 0,
                    stream_refreshes: 0,
                    trace: Vec::with_capacity(config.iterations),
                });
            }
            Ok(_) => {}
            Err(e) if e.is_estimator_failure() => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Numerical {
        step: 0,
        message: format!(
            "no prior draw gave a finite likelihood in {} attempts{}",
            config.max_init_attempts,
            last_err.map(|e| format!(" (last failure: {e})")).unwrap_or_default()
        ),
    })
}

/// Runs one chain, optionally resuming from a saved state and writing a
/// checkpoint as it goes.
pub fn run_chain<M: LikelihoodModel>(
    model: &M,
    config: &SamplerConfig,
    chain: usize,
    resume: Option<(ChainState, Vec<Draw>)>,
    mut sink: Option<&mut CheckpointWriter>,
) -> Result<ChainOutput> {
    config.validate()?;
    let seed = chain_seed(config.seed, chain);
    let transforms = model.transforms();
    let d = transforms.len();
    let (mut st, mut draws) = match resume {
        Some((st, draws)) => {
            if st.theta.len() != d {
                return Err(Error::config("checkpoint does not match the model's parameter count"));
            }
            (st, draws)
        }
        None => (initialize(model, config, seed)?, Vec::new()),
    };

    let (lo, hi) = config.target_acceptance;
    let target = 0.5 * (lo + hi);
    let refresh_every = (config.burn_in / 20).max(100);
    let start_collect = config.burn_in / 10;

    while st.iteration < config.iterations {
        let m = st.iteration;
        let in_burn_in = m < config.burn_in;

        let z: Vec<f64> = (0..d).map(|_| st.rng.sample(StandardNormal)).collect();
        let dy = st.adaptation.step(&z);
        let y_prop: Vec<f64> = st.unconstrained.iter().zip(&dy).map(|(a, b)| a + b).collect();
        let theta_prop: Vec<f64> = transforms.iter().zip(&y_prop).map(|(t, y)| t.to_constrained(*y)).collect();
        let stream_prop = st.stream.crank_nicolson(config.tau, &mut st.rng);
        let log_u: f64 = st.rng.random::<f64>().ln();

        let lp_prop = model.log_prior(&theta_prop);
        let mut alpha = 0.0;
        if lp_prop.is_finite() && theta_prop.iter().all(|v| v.is_finite()) {
            match model.estimate(&theta_prop, &stream_prop, config.keep_trajectories) {
                Ok(est) if est.log_likelihood.is_finite() => {
                    let lj_prop = log_jacobian(&transforms, &y_prop);
                    let log_r = (est.log_likelihood + lp_prop + lj_prop)
                        - (st.log_likelihood + st.log_prior + st.log_jacobian);
                    alpha = log_r.min(0.0).exp();
                    if log_u < log_r {
                        st.theta = theta_prop;
                        st.unconstrained = y_prop;
                        st.log_likelihood = est.log_likelihood;
                        st.log_prior = lp_prop;
                        st.log_jacobian = lj_prop;
                        st.estimate = est;
                        st.stream = stream_prop;
                        st.accepted += 1;
                        st.stream_refreshes += 1;
                        if !in_burn_in {
                            st.accepted_after_burn_in += 1;
                        }
                    }
                }
                Ok(_) => st.estimator_failures += 1,
                Err(e) if e.is_estimator_failure() => {
                    log::debug!("chain {chain} iteration {m}: {e}");
                    st.estimator_failures += 1;
                }
                Err(e) => return Err(e),
            }
        }

        if in_burn_in && config.adapt {
            let a = &mut st.adaptation;
            a.since_update += 1;
            let gamma = (1.0 / (a.since_update as f64).powf(0.6)).min(0.5);
            a.log_scale += gamma * (alpha - target);
            if m >= start_collect {
                let y = st.unconstrained.clone();
                a.observe(&y);
                if (m + 1 - start_collect) % refresh_every == 0 && m + 1 < config.burn_in {
                    a.refresh_factor();
                }
            }
        }

        st.trace.push(st.log_likelihood);
        st.iteration += 1;

        if !in_burn_in && (m + 1 - config.burn_in) % config.thin == 0 {
            let draw = Draw {
                iteration: m,
                theta: st.theta.clone(),
                log_likelihood: st.log_likelihood,
                log_prior: st.log_prior,
                increments: st.estimate.increments.clone(),
                trajectory: st.estimate.trajectory.clone(),
            };
            if let Some(w) = sink.as_deref_mut() {
                w.write_draw(&draw)?;
            }
            draws.push(draw);
        }
        if let Some(w) = sink.as_deref_mut() {
            if config.checkpoint_every > 0 && st.iteration % config.checkpoint_every == 0 && st.iteration < config.iterations
            {
                w.write_state(&st)?;
            }
        }
    }
    if let Some(w) = sink.as_deref_mut() {
        w.write_state(&st)?;
    }

    Ok(ChainOutput {
        chain,
        seed,
        param_names: model.param_names(),
        draws,
        iterations: config.iterations,
        burn_in: config.burn_in,
        thin: config.thin,
        accepted: st.accepted,
        accepted_after_burn_in: st.accepted_after_burn_in,
        estimator_failures: st.estimator_failures,
        stream_refreshes: st.stream_refreshes,
        log_likelihood_trace: st.trace,
        proposal_scale: st.adaptation.log_scale.exp(),
    })
}

/// Chain output rebuilt from a checkpoint written by a finished or
/// interrupted run.
pub fn load_chain(path: &Path) -> Result<ChainOutput> {
    let ck = read_checkpoint(path)?.ok_or_else(|| Error::data(format!("{} holds no chain state yet", path.display())))?;
    let st = ck.state;
    Ok(ChainOutput {
        chain: ck.header.chain,
        seed: ck.header.seed,
        param_names: ck.header.param_names,
        draws: ck.draws,
        iterations: st.iteration,
        burn_in: ck.header.config.burn_in,
        thin: ck.header.config.thin,
        accepted: st.accepted,
        accepted_after_burn_in: st.accepted_after_burn_in,
        estimator_failures: st.estimator_failures,
        stream_refreshes: st.stream_refreshes,
        log_likelihood_trace: st.trace,
        proposal_scale: st.adaptation.log_scale.exp(),
    })
}

/// Runs `config.chains` independent chains in parallel. With a checkpoint
/// directory, chain `k` is written to `chain_k.ckpt`; with `resume`, an
/// existing checkpoint is continued instead of starting afresh.
pub fn run_chains<M: LikelihoodModel>(
    model: &M,
    config: &SamplerConfig,
    checkpoint_dir: Option<&Path>,
    resume: bool,
) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    (0..config.chains)
        .into_par_iter()
        .map(|k| {
            let Some(dir) = checkpoint_dir else {
                return run_chain(model, config, k, None, None);
            };
            let path = dir.join(format!("chain_{k}.ckpt"));
            let saved = if resume && path.exists() { read_checkpoint(&path)? } else { None };
            let names = model.param_names();
            match saved {
                Some(ck) => {
                    if ck.header.param_names != names {
                        return Err(Error::config(format!("{} was written for a different model", path.display())));
                    }
                    let mut w = CheckpointWriter::resume(&path, &ck)?;
                    run_chain(model, config, k, Some((ck.state, ck.draws)), Some(&mut w))
                }
                None => {
                    let mut w = CheckpointWriter::create(&path, k, chain_seed(config.seed, k), &names, config)?;
                    run_chain(model, config, k, None, Some(&mut w))
                }
            }
        })
        .collect()
}
