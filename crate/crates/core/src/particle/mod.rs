//! Particle filters and the Rao-Blackwellised composition with the Kalman
//! filter.

pub mod filter;
pub mod linear;
pub mod resample;

pub use filter::{bootstrap_filter, correlated_particle_filter, FilterOptions, FilterOutput, ParticleModel};
pub use linear::{LinearParticleModel, LinearState};
pub use resample::{multinomial_resample, offspring_counts, systematic_resample};

use crate::domain::RandomStream;
use crate::error::Result;
use crate::kalman::{kalman_filter, LinearGaussianModel, Observation};

/// Likelihood of a model split into a linear-Gaussian part handled exactly and
/// a remainder handled by the fixed-stream particle filter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RbpfOutput {
    pub log_likelihood: f64,
    pub kalman_log_likelihood: f64,
    pub particle_log_likelihood: f64,
    /// Per-step sum of both parts' increments.
    pub increments: Vec<f64>,
    pub trajectory: Option<Vec<Vec<f64>>>,
}

/// Adds the exact Kalman likelihood of `linear` to the particle estimate of
/// `nonlinear`. Either side may be absent.
pub fn rbpf_likelihood<M: ParticleModel>(
    linear: Option<(&LinearGaussianModel, &[Observation])>,
    nonlinear: Option<(&M, &RandomStream)>,
    options: FilterOptions,
) -> Result<RbpfOutput> {
    let mut out = RbpfOutput::default();
    if let Some((model, ys)) = linear {
        let kf = kalman_filter(model, ys)?;
        out.kalman_log_likelihood = kf.log_likelihood;
        add_increments(&mut out.increments, &kf.increments);
    }
    if let Some((model, stream)) = nonlinear {
        let pf = correlated_particle_filter(model, stream, options)?;
        out.particle_log_likelihood = pf.log_likelihood;
        add_increments(&mut out.increments, &pf.increments);
        out.trajectory = pf.trajectory;
    }
    out.log_likelihood = out.kalman_log_likelihood + out.particle_log_likelihood;
    Ok(out)
}

/// Elementwise `acc += inc`, growing `acc` as needed.
pub fn add_increments(acc: &mut Vec<f64>, inc: &[f64]) {
    if acc.len() < inc.len() {
        acc.resize(inc.len(), 0.0);
    }
    for (a, b) in acc.iter_mut().zip(inc) {
        *a += b;
    }
}
