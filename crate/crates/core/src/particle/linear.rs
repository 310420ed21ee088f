//! A linear-Gaussian model run through the particle filter, mainly as a test
//! bed with an exact Kalman answer.

use nalgebra::{DMatrix, DVector};

use super::filter::ParticleModel;
use crate::error::{Error, Result};
use crate::kalman::{LinearGaussianModel, Observation};
use crate::linalg::{psd_factor, LN_2PI};

/// Largest state dimension supported by [`LinearParticleModel`].
pub const MAX_LINEAR_DIM: usize = 4;

pub type LinearState = [f64; MAX_LINEAR_DIM];

struct StepObs {
    rows: Vec<usize>,
    values: Vec<f64>,
    /// Inverse Cholesky factor of the observed block of R.
    inv_chol: DMatrix<f64>,
    log_norm: f64,
}

pub struct LinearParticleModel {
    dim: usize,
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    drift: Vec<DVector<f64>>,
    init_mean: DVector<f64>,
    init_factor: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
    obs: Vec<Option<StepObs>>,
}

impl LinearParticleModel {
    pub fn new(model: &LinearGaussianModel, observations: &[Observation]) -> Result<Self> {
        model.validate(observations)?;
        let dim = model.state_dim();
        if dim == 0 || dim > MAX_LINEAR_DIM {
            return Err(Error::contract(format!("particle state dimension must be 1..={MAX_LINEAR_DIM}")));
        }
        let a = model.transition.clone();
        let drift: Vec<DVector<f64>> = (0..observations.len()).map(|t| model.drift(t)).collect();
        let init_mean = &a * &model.initial_state + drift.first().cloned().unwrap_or_else(|| DVector::zeros(dim));
        let init_cov = &a * &model.initial_cov * a.transpose() + &model.process_cov;

        let mut obs = Vec::with_capacity(observations.len());
        for (t, y) in observations.iter().enumerate() {
            let rows: Vec<usize> = y.iter().enumerate().filter_map(|(i, v)| v.map(|_| i)).collect();
            if rows.is_empty() {
                obs.push(None);
                continue;
            }
            let r = model.obs_cov.select_rows(rows.iter()).select_columns(rows.iter());
            let chol = r.cholesky().ok_or_else(|| Error::Numerical {
                step: t,
                message: "observation covariance is not positive definite".into(),
            })?;
            let l = chol.l();
            let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let inv_chol = l.try_inverse().expect("triangular factor with positive diagonal");
            obs.push(Some(StepObs {
                values: rows.iter().map(|&i| y[i].unwrap()).collect(),
                log_norm: -0.5 * (rows.len() as f64 * LN_2PI + log_det),
                rows,
                inv_chol,
            }));
        }

        Ok(LinearParticleModel {
            dim,
            c: model.observation.clone(),
            drift,
            init_mean,
            init_factor: psd_factor(&init_cov),
            noise_factor: psd_factor(&model.process_cov),
            obs,
            a,
        })
    }

    fn affine(&self, mean: impl Fn(usize) -> f64, factor: &DMatrix<f64>, noise: &[f64]) -> LinearState {
        let mut out = [0.0; MAX_LINEAR_DIM];
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = mean(i) + noise.iter().enumerate().map(|(j, z)| factor[(i, j)] * z).sum::<f64>();
        }
        out
    }
}

impl ParticleModel for LinearParticleModel {
    type State = LinearState;

    fn steps(&self) -> usize {
        self.obs.len()
    }

    fn noise_dim(&self) -> usize {
        self.dim
    }

    fn initial(&self, noise: &[f64]) -> Result<LinearState> {
        Ok(self.affine(|i| self.init_mean[i], &self.init_factor, noise))
    }

    fn transition(&self, t: usize, prev: &LinearState, noise: &[f64]) -> Result<LinearState> {
        let mean = |i: usize| {
            let mut v = self.drift[t][i];
            for j in 0..self.dim {
                v += self.a[(i, j)] * prev[j];
            }
            v
        };
        Ok(self.affine(mean, &self.noise_factor, noise))
    }

    fn is_observed(&self, t: usize) -> bool {
        self.obs[t].is_some()
    }

    fn log_weight(&self, t: usize, state: &LinearState) -> f64 {
        let Some(o) = &self.obs[t] else { return 0.0 };
        let resid: Vec<f64> = o
            .rows
            .iter()
            .zip(&o.values)
            .map(|(&row, y)| y - (0..self.dim).map(|j| self.c[(row, j)] * state[j]).sum::<f64>())
            .collect();
        let quad: f64 = (0..resid.len())
            .map(|i| (0..=i).map(|j| o.inv_chol[(i, j)] * resid[j]).sum::<f64>().powi(2))
            .sum();
        o.log_norm - 0.5 * quad
    }

    fn sort_key(&self, state: &LinearState) -> f64 {
        state[..self.dim].iter().sum()
    }

    fn summary_dim(&self) -> usize {
        self.dim
    }

    fn summarize(&self, state: &LinearState, out: &mut [f64]) {
        out.copy_from_slice(&state[..self.dim]);
    }
}
