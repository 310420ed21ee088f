//! Correlated pseudo-marginal Metropolis-Hastings.
//!
//! Each iteration proposes `theta*` by a Gaussian random walk on the
//! unconstrained scale, refreshes the auxiliary normals with a
//! Crank-Nicolson step `U* = tau U + sqrt(1 - tau^2) xi`, and accepts with
//! the usual ratio of estimated posteriors. The Crank-Nicolson kernel is
//! reversible with respect to `N(0, I)`, so it drops out of the ratio.

pub mod checkpoint;
pub mod expectation;
mod sampler;

pub use checkpoint::{read_checkpoint, CheckpointWriter, CHECKPOINT_VERSION};
pub use expectation::{batch_means_se, posterior_expectation, PosteriorSummary};
pub use sampler::{chain_seed, load_chain, run_chain, run_chains, ChainState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Crank-Nicolson correlation of successive auxiliary blocks.
    pub tau: f64,
    pub chains: usize,
    pub seed: u64,
    /// Acceptance band the burn-in adaptation aims for.
    pub target_acceptance: (f64, f64),
    /// Tune the proposal during burn-in; frozen afterwards.
    pub adapt: bool,
    /// Initial random-walk step as a fraction of each parameter's prior
    /// spread on the unconstrained scale.
    pub initial_step: f64,
    pub keep_trajectories: bool,
    pub max_init_attempts: usize,
    /// Write a full resumable state every this many iterations (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 200_000,
            burn_in: 100_000,
            thin: 20,
            tau: 0.99,
            chains: 3,
            seed: 1,
            target_acceptance: (0.10, 0.25),
            adapt: true,
            initial_step: 0.1,
            keep_trajectories: true,
            max_init_attempts: 200,
            checkpoint_every: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::config(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::config("thinning stride must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::config(format!("tau must lie in [0, 1), got {}", self.tau)));
        }
        if self.chains == 0 {
            return Err(Error::config("at least one chain is required"));
        }
        let (lo, hi) = self.target_acceptance;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::config("target acceptance band must satisfy 0 < low < high < 1"));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::config("initial step must be positive"));
        }
        if self.max_init_attempts == 0 {
            return Err(Error::config("max_init_attempts must be positive"));
        }
        Ok(())
    }

    /// Number of draws kept per chain.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// One retained MCMC draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub increments: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub chain: usize,
    pub seed: u64,
    pub param_names: Vec<String>,
    pub draws: Vec<Draw>,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub accepted: usize,
    pub accepted_after_burn_in: usize,
    /// Proposals rejected because the likelihood estimator failed.
    pub estimator_failures: usize,
    /// Auxiliary-block refreshes that were accepted.
    pub stream_refreshes: usize,
    /// Current log-likelihood after every iteration.
    pub log_likelihood_trace: Vec<f64>,
    /// Final proposal scale on the unconstrained space.
    pub proposal_scale: f64,
}

impl ChainOutput {
    pub fn acceptance_rate(&self) -> f64 {
        let n = self.iterations - self.burn_in;
        if n == 0 {
            0.0
        } else {
            self.accepted_after_burn_in as f64 / n as f64
        }
    }

    /// Draws of parameter `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.theta[j]).collect()
    }
}
