//! The contract between a likelihood estimator and the samplers and
//! model-selection code built on top of it.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::domain::{RandomStream, StreamLayout};
use crate::error::{Error, Result};

/// One likelihood evaluation at a fixed `(theta, U, V)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub log_likelihood: f64,
    /// Per-step conditional log-likelihood terms; they sum to `log_likelihood`.
    pub increments: Vec<f64>,
    /// One latent trajectory, `steps x trajectory_labels().len()`.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

/// Bijection between a parameter's support and the real line, used by the
/// random-walk proposal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `x = lower + exp(y)`.
    Log { lower: f64 },
    /// `x = lower + (upper - lower) / (1 + exp(-y))`.
    Logit { lower: f64, upper: f64 },
}

impl Transform {
    pub fn to_unconstrained(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log { lower } => (x - lower).ln(),
            Transform::Logit { lower, upper } => {
                let p = (x - lower) / (upper - lower);
                (p / (1.0 - p)).ln()
            }
        }
    }

    pub fn to_constrained(self, y: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::Log { lower } => lower + y.exp(),
            Transform::Logit { lower, upper } => lower + (upper - lower) * sigmoid(y),
        }
    }

    /// `log |dx/dy|` at `y`.
    pub fn log_jacobian(self, y: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log { .. } => y,
            Transform::Logit { lower, upper } => {
                // log sigma(y) + log(1 - sigma(y)) = -|y| - 2 log(1 + exp(-|y|))
                (upper - lower).ln() - y.abs() - 2.0 * (-y.abs()).exp().ln_1p()
            }
        }
    }
}

fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// A Bayesian model with an estimable likelihood over a free parameter
/// vector `theta`.
pub trait LikelihoodModel: Sync {
    fn param_names(&self) -> Vec<String>;

    fn transforms(&self) -> Vec<Transform>;

    /// Log prior density; `-inf` outside the support.
    fn log_prior(&self, theta: &[f64]) -> f64;

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Auxiliary random numbers one likelihood estimate consumes. Exact
    /// likelihoods return [`StreamLayout::empty`].
    fn stream_layout(&self) -> StreamLayout;

    fn estimate(&self, theta: &[f64], stream: &RandomStream, keep_trajectory: bool) -> Result<Estimate>;

    /// Number of time steps in the data horizon.
    fn n_steps(&self) -> usize;

    /// Steps carrying at least one observation, in time order.
    fn observed_steps(&self) -> Vec<usize>;

    /// The same model restricted to steps `0..=last`.
    fn truncated(&self, last: usize) -> Result<Self>
    where
        Self: Sized;

    /// Names of the trajectory columns, e.g. one per field.
    fn trajectory_labels(&self) -> Vec<String> {
        Vec::new()
    }

    /// `log p(Y_step | Y_{0..step-1}, theta)` estimated with `stream`, which
    /// must match `self.truncated(step)?.stream_layout()`.
    fn log_predictive(&self, theta: &[f64], step: usize, stream: &RandomStream) -> Result<f64>
    where
        Self: Sized,
    {
        let m = self.truncated(step)?;
        let est = m.estimate(theta, stream, false)?;
        est.increments
            .get(step)
            .copied()
            .ok_or_else(|| Error::contract(format!("estimator returned no increment for step {step}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn transforms_round_trip(y in -20.0f64..20.0) {
            for t in [
                Transform::Identity,
                Transform::Log { lower: 0.0 },
                Transform::Log { lower: 2.0 },
                Transform::Logit { lower: 0.0, upper: 1.0 },
                Transform::Logit { lower: -1.0, upper: 1.0 },
            ] {
                let x = t.to_constrained(y);
                let back = t.to_unconstrained(x);
                prop_assert!((back - y).abs() < 1e-6 * (1.0 + y.abs()), "{t:?} {y} {back}");
            }
        }

        #[test]
        fn jacobian_matches_finite_difference(y in -8.0f64..8.0) {
            for t in [Transform::Log { lower: 0.5 }, Transform::Logit { lower: -1.0, upper: 1.0 }] {
                let h = 1e-6;
                let d = (t.to_constrained(y + h) - t.to_constrained(y - h)) / (2.0 * h);
                prop_assert!((d.ln() - t.log_jacobian(y)).abs() < 1e-5);
            }
        }
    }
}
