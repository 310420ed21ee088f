//! Plant dry-matter sub-model. Every series is a Gaussian AR(1) in log space
//! (or a harvest-index multiple of one), observed with log-normal error, so
//! a field's plant block is linear-Gaussian and handled exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::process::{carbon_input, InputParams, InputScheme, PlantMasses};
use crate::domain::{Channel, Dataset, ManagementSchedule, ParamKey, ParameterVector, MAX_PLANT_DIM};
use crate::error::{Error, Result};
use crate::kalman::{LinearGaussianModel, Observation};
use crate::linalg::{psd_factor, symmetrize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SlotLaw {
    /// `log X_t = mu + rho (log X_{t-1} - mu) + e`, `e ~ N(0, sigma2)`.
    Ar { mu: ParamKey, rho: ParamKey, sigma2: ParamKey },
    /// `log X_t = log h + log X^parent_t + e`, `e ~ N(0, sigma2)`.
    Harvest { parent: usize, index: ParamKey, sigma2: ParamKey },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSlot {
    pub channel: Channel,
    pub law: SlotLaw,
    pub obs_var: ParamKey,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantLayout {
    pub slots: Vec<PlantSlot>,
    pub scheme: InputScheme,
}

impl PlantLayout {
    /// Wheat grain, wheat total dry matter, pasture.
    pub fn tarlee() -> Self {
        use ParamKey::*;
        PlantLayout {
            slots: vec![
                PlantSlot {
                    channel: Channel::GrainWheat,
                    law: SlotLaw::Ar { mu: MuGrainWheat, rho: RhoGrainWheat, sigma2: Sigma2GrainWheat },
                    obs_var: ObsGrainWheat,
                },
                PlantSlot {
                    channel: Channel::Wheat,
                    law: SlotLaw::Harvest { parent: 0, index: HarvestIndexWheat, sigma2: Sigma2Wheat },
                    obs_var: ObsWheat,
                },
                PlantSlot {
                    channel: Channel::Pasture,
                    law: SlotLaw::Ar { mu: MuPasture, rho: RhoPasture, sigma2: Sigma2Pasture },
                    obs_var: ObsPasture,
                },
            ],
            scheme: InputScheme::Standard,
        }
    }

    /// Wheat and sorghum, each as grain plus total dry matter.
    pub fn brigalow() -> Self {
        use ParamKey::*;
        let mut l = PlantLayout::tarlee();
        l.slots.truncate(2);
        l.slots.push(PlantSlot {
            channel: Channel::GrainSorghum,
            law: SlotLaw::Ar { mu: MuGrainSorghum, rho: RhoGrainSorghum, sigma2: Sigma2GrainSorghum },
            obs_var: ObsGrainSorghum,
        });
        l.slots.push(PlantSlot {
            channel: Channel::Sorghum,
            law: SlotLaw::Harvest { parent: 2, index: HarvestIndexSorghum, sigma2: Sigma2Sorghum },
            obs_var: ObsSorghum,
        });
        l
    }

    /// Grain and straw as independent series.
    pub fn broadbalk() -> Self {
        use ParamKey::*;
        PlantLayout {
            slots: vec![
                PlantSlot {
                    channel: Channel::Grain,
                    law: SlotLaw::Ar { mu: MuGrain, rho: RhoGrain, sigma2: Sigma2Grain },
                    obs_var: ObsGrain,
                },
                PlantSlot {
                    channel: Channel::Straw,
                    law: SlotLaw::Ar { mu: MuStraw, rho: RhoStraw, sigma2: Sigma2Straw },
                    obs_var: ObsStraw,
                },
            ],
            scheme: InputScheme::Rothamsted,
        }
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    pub fn slot_of(&self, channel: Channel) -> Option<usize> {
        self.slots.iter().position(|s| s.channel == channel)
    }

    pub fn channels(&self) -> Vec<Channel> {
        self.slots.iter().map(|s| s.channel).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots.is_empty() || self.slots.len() > MAX_PLANT_DIM {
            return Err(Error::config(format!("a plant layout needs 1..={MAX_PLANT_DIM} series")));
        }
        for (j, s) in self.slots.iter().enumerate() {
            if let SlotLaw::Harvest { parent, .. } = s.law {
                let ok = parent < j && matches!(self.slots[parent].law, SlotLaw::Ar { .. });
                if !ok {
                    return Err(Error::config(format!("plant series {} must follow an AR series", s.channel)));
                }
            }
        }
        Ok(())
    }

    /// Dynamic parameters of the plant series (observation variances excluded).
    pub fn plant_params(&self) -> Vec<ParamKey> {
        let mut out = Vec::new();
        for s in &self.slots {
            match s.law {
                SlotLaw::Ar { mu, rho, sigma2 } => out.extend([mu, rho, sigma2]),
                SlotLaw::Harvest { index, sigma2, .. } => out.extend([index, sigma2]),
            }
        }
        out
    }

    /// Input-function parameters besides carbon content.
    pub fn input_params(&self) -> Vec<ParamKey> {
        let has = |c| self.slot_of(c).is_some();
        let mut out = Vec::new();
        if has(Channel::Wheat) || self.scheme == InputScheme::Rothamsted {
            out.push(ParamKey::RootShootWheat);
        }
        if has(Channel::Pasture) {
            out.push(ParamKey::RootShootPasture);
        }
        if has(Channel::Sorghum) {
            out.push(ParamKey::RootShootSorghum);
        }
        if self.scheme == InputScheme::Standard {
            out.push(ParamKey::ResidueFraction);
        }
        out
    }

    /// Dry matter from a log-scale plant state.
    pub fn masses(&self, log: &[f64]) -> PlantMasses {
        let mut m = PlantMasses::default();
        for (s, x) in self.slots.iter().zip(log) {
            let v = Some(x.exp());
            match s.channel {
                Channel::GrainWheat => m.grain_wheat = v,
                Channel::Wheat => m.wheat = v,
                Channel::Pasture => m.pasture = v,
                Channel::GrainSorghum => m.grain_sorghum = v,
                Channel::Sorghum => m.sorghum = v,
                Channel::Grain => m.grain = v,
                Channel::Straw => m.straw = v,
                _ => {}
            }
        }
        m
    }

    /// Fails if some scheduled treatment needs a crop the layout lacks.
    pub fn check_schedule(&self, schedule: &ManagementSchedule) -> Result<()> {
        let m = self.masses(&[0.0; MAX_PLANT_DIM][..self.dim()]);
        let q = InputParams { c: 1.0, r_w: 1.0, r_p: 1.0, r_s: 1.0, p: 0.5, scheme: self.scheme, cleared: 0.0 };
        for t in schedule.iter() {
            carbon_input(t, &m, &q)?;
        }
        Ok(())
    }

    /// Linear-Gaussian model of one field's log plant state. The pre-sample
    /// state is stationary, so step 0 is drawn from the stationary law.
    pub fn linear_model(&self, theta: &ParameterVector, steps: usize) -> Result<LinearGaussianModel> {
        let d = self.dim();
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        let mut q = DMatrix::zeros(d, d);
        let mut x0 = DVector::zeros(d);
        let mut p0 = DMatrix::zeros(d, d);
        let bad = |k: ParamKey, v: f64| Error::contract(format!("plant parameter {k} = {v} is outside its support"));
        for (j, s) in self.slots.iter().enumerate() {
            match s.law {
                SlotLaw::Ar { mu, rho, sigma2 } => {
                    let (m, r, s2) = (theta.get(mu), theta.get(rho), theta.get(sigma2));
                    if !(r > -1.0 && r < 1.0) {
                        return Err(bad(rho, r));
                    }
                    if !(s2 > 0.0) || !m.is_finite() {
                        return Err(bad(sigma2, s2));
                    }
                    a[(j, j)] = r;
                    b[j] = m * (1.0 - r);
                    q[(j, j)] = s2;
                    x0[j] = m;
                    p0[(j, j)] = s2 / (1.0 - r * r);
                }
                SlotLaw::Harvest { parent: i, index, sigma2 } => {
                    let (h, s2) = (theta.get(index), theta.get(sigma2));
                    if !(h > 0.0) {
                        return Err(bad(index, h));
                    }
                    if !(s2 > 0.0) {
                        return Err(bad(sigma2, s2));
                    }
                    a[(j, i)] = a[(i, i)];
                    b[j] = h.ln() + b[i];
                    q[(j, j)] = q[(i, i)] + s2;
                    q[(i, j)] = q[(i, i)];
                    q[(j, i)] = q[(i, i)];
                    x0[j] = x0[i] + h.ln();
                    p0[(j, j)] = p0[(i, i)] + s2;
                    p0[(i, j)] = p0[(i, i)];
                    p0[(j, i)] = p0[(i, i)];
                }
            }
        }
        let r = DMatrix::from_diagonal(&DVector::from_iterator(d, self.slots.iter().map(|s| theta.get(s.obs_var))));
        if r.diagonal().iter().any(|v| !(*v > 0.0)) {
            return Err(Error::contract("plant observation variances must be positive"));
        }
        Ok(LinearGaussianModel::new(a, DMatrix::identity(d, d), q, r, x0)
            .with_initial_cov(p0)
            .with_controls(DMatrix::identity(d, d), vec![b; steps]))
    }

    /// Log-scale plant observations of one field, plus the log-Jacobian
    /// `-sum log Y` per step that turns the Gaussian density of `log Y` into
    /// the log-normal density of `Y`.
    pub fn observations(&self, data: &Dataset, field: usize) -> (Vec<Observation>, Vec<f64>) {
        let steps = data.n_years();
        let mut obs = Vec::with_capacity(steps);
        let mut jac = vec![0.0; steps];
        for (t, j) in jac.iter_mut().enumerate() {
            let row: Observation = self
                .slots
                .iter()
                .map(|s| data.get(field, t, s.channel).map(|y| {
                    *j -= y.ln();
                    y.ln()
                }))
                .collect();
            obs.push(row);
        }
        (obs, jac)
    }
}

type Mat = [f64; MAX_PLANT_DIM * MAX_PLANT_DIM];
type Vec4 = [f64; MAX_PLANT_DIM];

fn to_mat(m: &DMatrix<f64>) -> Mat {
    let mut out = [0.0; MAX_PLANT_DIM * MAX_PLANT_DIM];
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[i * MAX_PLANT_DIM + j] = m[(i, j)];
        }
    }
    out
}

fn to_vec(v: &DVector<f64>) -> Vec4 {
    let mut out = [0.0; MAX_PLANT_DIM];
    out[..v.len()].copy_from_slice(v.as_slice());
    out
}

#[derive(Clone, Debug)]
struct CondStep {
    gain: Mat,
    offset: Vec4,
    factor: Mat,
}

/// Draws a field's plant path forward from `p(x_t | x_{t-1}, y_{t..T})`,
/// so a particle carrying it needs no plant weights. Built by a backward
/// information filter; with no data it reduces to the prior transition.
#[derive(Clone, Debug)]
pub struct PlantSampler {
    dim: usize,
    steps: Vec<CondStep>,
}

impl PlantSampler {
    pub fn conditional(model: &LinearGaussianModel, observations: &[Observation]) -> Result<Self> {
        model.validate(observations)?;
        let d = model.state_dim();
        let steps = observations.len();
        let a = &model.transition;
        let q = &model.process_cov;
        let eye = DMatrix::<f64>::identity(d, d);
        let mut omega = DMatrix::<f64>::zeros(d, d);
        let mut info = DVector::<f64>::zeros(d);
        let mut out = vec![CondStep { gain: [0.0; 16], offset: [0.0; 4], factor: [0.0; 16] }; steps];

        for t in (0..steps).rev() {
            let mut om = omega.clone();
            let mut qt = info.clone();
            let y = &observations[t];
            let rows: Vec<usize> = y.iter().enumerate().filter_map(|(i, v)| v.map(|_| i)).collect();
            if !rows.is_empty() {
                let h = model.observation.select_rows(rows.iter());
                let r = model.obs_cov.select_rows(rows.iter()).select_columns(rows.iter());
                let r_inv = r.try_inverse().ok_or_else(|| Error::Numerical {
                    step: t,
                    message: "singular plant observation covariance".into(),
                })?;
                let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i].unwrap()));
                om += h.transpose() * &r_inv * &h;
                qt += h.transpose() * &r_inv * yv;
            }
            // Prior of x_t given its predecessor: N(A x + b, Q), or the
            // stationary law at t = 0.
            let (cov, mean0) = if t == 0 {
                let mut c = a * &model.initial_cov * a.transpose() + q;
                symmetrize(&mut c);
                (c, Some(a * &model.initial_state + model.drift(0)))
            } else {
                (q.clone(), None)
            };
            let s_inv = (&eye + &cov * &om).try_inverse().ok_or_else(|| Error::Numerical {
                step: t,
                message: "plant conditional is singular".into(),
            })?;
            let mut m_inv = &s_inv * &cov;
            symmetrize(&mut m_inv);
            let step = &mut out[t];
            step.factor = to_mat(&psd_factor(&m_inv));
            match mean0 {
                Some(mu) => {
                    step.offset = to_vec(&(&s_inv * mu + &m_inv * &qt));
                }
                None => {
                    let b = model.drift(t);
                    step.gain = to_mat(&(&s_inv * a));
                    step.offset = to_vec(&(&s_inv * &b + &m_inv * &qt));
                    let mut om_m = &om - &om * &m_inv * &om;
                    symmetrize(&mut om_m);
                    let q_m = &qt - &om * &m_inv * &qt;
                    omega = a.transpose() * &om_m * a;
                    symmetrize(&mut omega);
                    info = a.transpose() * (q_m - &om_m * b);
                }
            }
        }
        Ok(PlantSampler { dim: d, steps: out })
    }

    /// Forward sampler from the prior transition, ignoring the data.
    pub fn prior(model: &LinearGaussianModel, steps: usize) -> Result<Self> {
        let empty: Vec<Observation> = vec![vec![None; model.obs_dim()]; steps];
        Self::conditional(model, &empty)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.steps.len()
    }

    /// State at step `t` from the state at `t - 1` (ignored at `t = 0`) and
    /// `dim` standard normals.
    pub fn sample(&self, t: usize, prev: &[f64], z: &[f64]) -> Vec4 {
        let s = &self.steps[t];
        let d = self.dim;
        let mut x = s.offset;
        for i in 0..d {
            let row = i * MAX_PLANT_DIM;
            let mut v = 0.0;
            if t > 0 {
                for j in 0..d {
                    v += s.gain[row + j] * prev[j];
                }
            }
            for j in 0..d {
                v += s.factor[row + j] * z[j];
            }
            x[i] += v;
        }
        x
    }
}
