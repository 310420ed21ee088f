//! Small models with known answers, used to check the sampler and the
//! model-selection code end to end.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Normal};

use crate::domain::{RandomStream, StreamLayout};
use crate::error::{Error, Result};
use crate::kalman::{kalman_filter, LinearGaussianModel, Observation};
use crate::linalg::LN_2PI;
use crate::model::{Estimate, LikelihoodModel, Transform};
use crate::particle::{correlated_particle_filter, FilterOptions, LinearParticleModel, ParticleModel};

/// Scalar state-space model with an unknown level `mu`:
///
/// ```text
/// x_0 = mu (+ stationary spread),  x_t = rho x_{t-1} + (1 - rho) mu + e_t,  y_t = x_t + v_t
/// ```
///
/// With `rho = 1` and `q = 0` this is the iid normal model with known
/// variance `r`. `mu` has a normal prior. The likelihood is computed by the
/// Kalman filter, or by the fixed-stream particle filter when `particles` is
/// set.
#[derive(Clone, Debug)]
pub struct LocationModel {
    pub ys: Vec<Option<f64>>,
    pub rho: f64,
    pub q: f64,
    pub r: f64,
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub particles: Option<usize>,
}

impl LocationModel {
    /// `y_t ~ N(mu, sigma^2)` iid, `mu ~ N(prior_mean, prior_sd^2)`.
    pub fn iid(ys: Vec<f64>, sigma: f64, prior_mean: f64, prior_sd: f64) -> Self {
        LocationModel {
            ys: ys.into_iter().map(Some).collect(),
            rho: 1.0,
            q: 0.0,
            r: sigma * sigma,
            prior_mean,
            prior_sd,
            particles: None,
        }
    }

    pub fn with_particles(mut self, n: usize) -> Self {
        self.particles = Some(n);
        self
    }

    fn linear(&self, mu: f64) -> (LinearGaussianModel, Vec<Observation>) {
        let p0 = if self.rho.abs() < 1.0 { self.q / (1.0 - self.rho * self.rho) } else { 0.0 };
        // Start one step before the first observation so the first predict
        // lands on the stationary law.
        let x0 = mu;
        let model = LinearGaussianModel::scalar(self.rho, 1.0, self.q, self.r, x0)
            .with_initial_cov(DMatrix::from_element(1, 1, p0))
            .with_controls(
                DMatrix::from_element(1, 1, 1.0 - self.rho),
                vec![DVector::from_element(1, mu); self.ys.len()],
            );
        let obs = self.ys.iter().map(|y| vec![*y]).collect();
        (model, obs)
    }
}

impl LikelihoodModel for LocationModel {
    fn param_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn transforms(&self) -> Vec<Transform> {
        vec![Transform::Identity]
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let z = (theta[0] - self.prior_mean) / self.prior_sd;
        -0.5 * (LN_2PI + z * z) - self.prior_sd.ln()
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let d = Normal::new(self.prior_mean, self.prior_sd).expect("valid prior");
        vec![d.sample(rng)]
    }

    fn stream_layout(&self) -> StreamLayout {
        match self.particles {
            Some(n) => StreamLayout::new(self.ys.len(), n, 1),
            None => StreamLayout::empty(),
        }
    }

    fn estimate(&self, theta: &[f64], stream: &RandomStream, keep_trajectory: bool) -> Result<Estimate> {
        let (model, obs) = self.linear(theta[0]);
        match self.particles {
            None => {
                let kf = kalman_filter(&model, &obs)?;
                let trajectory =
                    keep_trajectory.then(|| kf.means.iter().map(|m| vec![m[0]]).collect::<Vec<_>>());
                Ok(Estimate { log_likelihood: kf.log_likelihood, increments: kf.increments, trajectory })
            }
            Some(_) => {
                let pm = LinearParticleModel::new(&model, &obs)?;
                stream.check_covers(pm.layout(stream.layout().particles))?;
                let pf = correlated_particle_filter(&pm, stream, FilterOptions { keep_trajectory, ..Default::default() })?;
                Ok(Estimate { log_likelihood: pf.log_likelihood, increments: pf.increments, trajectory: pf.trajectory })
            }
        }
    }

    fn n_steps(&self) -> usize {
        self.ys.len()
    }

    fn observed_steps(&self) -> Vec<usize> {
        self.ys.iter().enumerate().filter_map(|(t, y)| y.map(|_| t)).collect()
    }

    fn truncated(&self, last: usize) -> Result<Self> {
        if last >= self.ys.len() {
            return Err(Error::contract(format!("cannot truncate {} steps at {last}", self.ys.len())));
        }
        let mut m = self.clone();
        m.ys.truncate(last + 1);
        Ok(m)
    }

    fn trajectory_labels(&self) -> Vec<String> {
        vec!["x".into()]
    }
}
