//! Exact filtering and log-likelihood for linear-Gaussian state-space models.
//!
//! ```text
//! x_t = A x_{t-1} + B u_t + e_t,   e_t ~ N(0, Q)
//! y_t = C x_t + v_t,               v_t ~ N(0, R)
//! ```
//!
//! Observations may be partially missing: only the observed rows of `C`
//! and the matching block of `R` enter the update. A step with nothing
//! observed is a pure prediction and contributes nothing to the likelihood.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, LN_2PI};

/// One observation vector; `None` marks a missing component.
pub type Observation = Vec<Option<f64>>;

#[derive(Clone, Debug)]
pub struct LinearGaussianModel {
    pub transition: DMatrix<f64>,
    pub control: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub process_cov: DMatrix<f64>,
    pub obs_cov: DMatrix<f64>,
    pub initial_state: DVector<f64>,
    /// Covariance of the initial state; zero for an exactly known `x_0`.
    pub initial_cov: DMatrix<f64>,
    /// Control input per step. Empty means no control.
    pub inputs: Vec<DVector<f64>>,
}

impl LinearGaussianModel {
    /// Model with an exactly known initial state and no control input.
    pub fn new(
        transition: DMatrix<f64>,
        observation: DMatrix<f64>,
        process_cov: DMatrix<f64>,
        obs_cov: DMatrix<f64>,
        initial_state: DVector<f64>,
    ) -> Self {
        let n = transition.nrows();
        LinearGaussianModel {
            transition,
            control: DMatrix::zeros(n, 0),
            observation,
            process_cov,
            obs_cov,
            initial_state,
            initial_cov: DMatrix::zeros(n, n),
            inputs: Vec::new(),
        }
    }

    /// Scalar model `x_t = a x_{t-1} + e`, `y_t = c x_t + v`.
    pub fn scalar(a: f64, c: f64, q: f64, r: f64, x0: f64) -> Self {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
            DVector::from_element(1, x0),
        )
    }

    pub fn with_initial_cov(mut self, cov: DMatrix<f64>) -> Self {
        self.initial_cov = cov;
        self
    }

    pub fn with_controls(mut self, control: DMatrix<f64>, inputs: Vec<DVector<f64>>) -> Self {
        self.control = control;
        self.inputs = inputs;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.nrows()
    }

    /// `B u_t`, or zero when the model has no control input at step `t`.
    pub fn drift(&self, t: usize) -> DVector<f64> {
        match self.inputs.get(t) {
            Some(u) if self.control.ncols() > 0 => &self.control * u,
            _ => DVector::zeros(self.state_dim()),
        }
    }

    pub fn validate(&self, observations: &[Observation]) -> Result<()> {
        let n = self.state_dim();
        let p = self.obs_dim();
        let ok = self.transition.ncols() == n
            && self.observation.ncols() == n
            && self.process_cov.shape() == (n, n)
            && self.obs_cov.shape() == (p, p)
            && self.initial_state.len() == n
            && self.initial_cov.shape() == (n, n)
            && self.control.nrows() == n
            && self.inputs.iter().all(|u| u.len() == self.control.ncols());
        if !ok {
            return Err(Error::contract("linear-Gaussian model matrices are not conformable"));
        }
        if let Some((t, _)) = observations.iter().enumerate().find(|(_, y)| y.len() != p) {
            return Err(Error::contract(format!("observation at step {t} has the wrong dimension")));
        }
        for (name, m) in [("process", &self.process_cov), ("observation", &self.obs_cov), ("initial", &self.initial_cov)] {
            if m.diagonal().iter().any(|v| !(*v >= 0.0)) || m.iter().any(|v| !v.is_finite()) {
                return Err(Error::contract(format!("{name} covariance has a negative or non-finite entry on its diagonal")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct KalmanOutput {
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Per-step log-likelihood contributions; zero where nothing was observed.
    pub increments: Vec<f64>,
    pub log_likelihood: f64,
}

/// Runs the predict/update recursion over `observations` (one entry per step).
pub fn kalman_filter(model: &LinearGaussianModel, observations: &[Observation]) -> Result<KalmanOutput> {
    model.validate(observations)?;
    let n = model.state_dim();
    let a = &model.transition;
    let mut x = model.initial_state.clone();
    let mut p = model.initial_cov.clone();

    let mut out = KalmanOutput {
        means: Vec::with_capacity(observations.len()),
        covariances: Vec::with_capacity(observations.len()),
        increments: Vec::with_capacity(observations.len()),
        log_likelihood: 0.0,
    };

    for (t, y) in observations.iter().enumerate() {
        x = a * &x + model.drift(t);
        p = a * &p * a.transpose() + &model.process_cov;
        symmetrize(&mut p);

        let idx: Vec<usize> = y.iter().enumerate().filter_map(|(i, v)| v.map(|_| i)).collect();
        let mut ll = 0.0;
        if !idx.is_empty() {
            let c = model.observation.select_rows(idx.iter());
            let r = model.obs_cov.select_rows(idx.iter()).select_columns(idx.iter());
            let y_obs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i].unwrap()));

            let mut s = &r + &c * &p * c.transpose();
            symmetrize(&mut s);
            let chol = s.clone().cholesky().ok_or_else(|| Error::Numerical {
                step: t,
                message: "innovation covariance is not positive definite".into(),
            })?;
            let innov = &y_obs - &c * &x;
            let pc_t = &p * c.transpose();
            // K = P C^T S^-1, computed as (S^-1 C P)^T.
            let gain = chol.solve(&pc_t.transpose()).transpose();

            x += &gain * &innov;
            let i_kc = DMatrix::<f64>::identity(n, n) - &gain * &c;
            p = &i_kc * &p * i_kc.transpose() + &gain * &r * gain.transpose();
            symmetrize(&mut p);

            let quad = innov.dot(&chol.solve(&innov));
            let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            ll = -0.5 * (idx.len() as f64 * LN_2PI + log_det + quad);
        }
        out.log_likelihood += ll;
        out.increments.push(ll);
        out.means.push(x.clone());
        out.covariances.push(p.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;

    #[test]
    fn single_standard_normal_observation() {
        let m = LinearGaussianModel::scalar(1.0, 1.0, 0.0, 1.0, 0.0);
        let out = kalman_filter(&m, &[vec![Some(0.0)]]).unwrap();
        assert!((out.log_likelihood + 0.5 * LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn random_walk_innovation_variance_two() {
        // y_1 ~ N(0, Q + R) = N(0, 2): -0.5 log(4 pi) - 1/4
        let m = LinearGaussianModel::scalar(1.0, 1.0, 1.0, 1.0, 0.0);
        let out = kalman_filter(&m, &[vec![Some(1.0)]]).unwrap();
        let expected = -0.5 * (4.0 * std::f64::consts::PI).ln() - 0.25;
        assert!((out.log_likelihood - expected).abs() < 1e-14);
    }

    #[test]
    fn missing_step_is_prediction_only() {
        let m = LinearGaussianModel::scalar(0.5, 1.0, 1.0, 1.0, 2.0);
        let out = kalman_filter(&m, &[vec![None], vec![Some(0.3)]]).unwrap();
        assert_eq!(out.increments[0], 0.0);
        assert!((out.means[0][0] - 1.0).abs() < 1e-15);
        assert!((out.covariances[0][(0, 0)] - 1.0).abs() < 1e-15);
        // step 2 predictive: mean 0.5, var 0.25 + 1 + 1
        let v: f64 = 2.25;
        let expected = -0.5 * (LN_2PI + v.ln() + (0.3f64 - 0.5).powi(2) / v);
        assert!((out.log_likelihood - expected).abs() < 1e-13);
    }

    #[test]
    fn deterministic_dynamics_track_exactly() {
        let m = LinearGaussianModel::scalar(0.9, 1.0, 0.0, 0.5, 3.0);
        let ys: Vec<Observation> = (0..5).map(|_| vec![Some(1.0)]).collect();
        let out = kalman_filter(&m, &ys).unwrap();
        for (t, mean) in out.means.iter().enumerate() {
            assert!((mean[0] - 3.0 * 0.9f64.powi(t as i32 + 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_stays_psd() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.8]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        let q = DMatrix::from_row_slice(2, 2, &[0.1, 0.02, 0.02, 0.05]);
        let r = DMatrix::from_element(1, 1, 1e-6);
        let m = LinearGaussianModel::new(a, c, q, r, DVector::zeros(2));
        let ys: Vec<Observation> = (0..200).map(|t| vec![Some((t as f64 * 0.1).sin())]).collect();
        let out = kalman_filter(&m, &ys).unwrap();
        for p in &out.covariances {
            assert!(min_eigenvalue(p) >= -1e-10);
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        let m = LinearGaussianModel::scalar(1.0, 1.0, 1.0, 1.0, 0.0);
        assert!(matches!(kalman_filter(&m, &[vec![Some(1.0), Some(2.0)]]), Err(Error::Contract(_))));
    }

    #[test]
    fn singular_innovation_reports_step() {
        let m = LinearGaussianModel::scalar(1.0, 1.0, 0.0, 0.0, 0.0);
        match kalman_filter(&m, &[vec![None], vec![Some(1.0)]]) {
            Err(Error::Numerical { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }
}
