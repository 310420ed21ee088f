//! The SOC state-space models: three-pool and five-pool carbon dynamics in
//! regular and BIO-K form, on top of per-site plant sub-models.
//!
//! The likelihood is Rao-Blackwellised: each field's plant block is
//! linear-Gaussian in log space and filtered exactly, IOM observations are
//! scored in closed form, and each field's carbon pools go through their
//! own fixed-stream particle filter.

pub mod filter;
pub mod plant;
pub mod prior;
pub mod presets;
pub mod process;
pub mod synth;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use filter::SocParticle;
pub use plant::{PlantLayout, PlantSampler, PlantSlot, SlotLaw};
pub use prior::{Prior, PriorSet};
pub use process::{
    apply_process_noise, carbon_input, carbon_step, initial_pools, step, CarbonParams, CarbonStep, InitialFractions,
    InputParams, InputScheme, PlantMasses, StepOptions,
};
pub use synth::{crop_channels, generate_synthetic, ObservationPlan, Synthetic};

use crate::domain::{Channel, Dataset, ModelVariant, ParamKey, ParameterVector, RandomStream, StreamLayout, KAPPA_BIO};
use crate::error::{Error, Result};
use crate::kalman::kalman_filter;
use crate::linalg::LN_2PI;
use crate::model::{Estimate, LikelihoodModel, Transform};
use crate::particle::{add_increments, correlated_particle_filter, FilterOptions, FilterOutput};
use filter::CarbonFilter;
use rayon::prelude::*;

/// Site presets: plant series, input scheme and prior table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    Tarlee,
    Brigalow,
    Broadbalk,
}

impl Site {
    pub fn layout(self) -> PlantLayout {
        match self {
            Site::Tarlee => PlantLayout::tarlee(),
            Site::Brigalow => PlantLayout::brigalow(),
            Site::Broadbalk => PlantLayout::broadbalk(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Site::Tarlee => "tarlee",
            Site::Brigalow => "brigalow",
            Site::Broadbalk => "broadbalk",
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Site {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tarlee" => Ok(Site::Tarlee),
            "brigalow" => Ok(Site::Brigalow),
            "broadbalk" | "rothamsted" => Ok(Site::Broadbalk),
            _ => Err(Error::config(format!("unknown site '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SocOptions {
    pub particles: usize,
    /// Filter the plant block exactly; otherwise plant states are
    /// propagated blindly and plant observations weight the particles.
    pub rao_blackwellise: bool,
    pub mediate_dpm_decay: bool,
    pub kappa: f64,
    pub initial: InitialFractions,
    /// Carbon input (t/ha) in clearing years.
    pub cleared_input: f64,
    pub ess_threshold: Option<f64>,
}

impl Default for SocOptions {
    fn default() -> Self {
        SocOptions {
            particles: 100,
            rao_blackwellise: true,
            mediate_dpm_decay: true,
            kappa: KAPPA_BIO,
            initial: InitialFractions::default(),
            cleared_input: 0.0,
            ess_threshold: None,
        }
    }
}

impl SocOptions {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::config("at least one particle is required"));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::config("kappa must lie in (0, 1)"));
        }
        if !(self.cleared_input >= 0.0) {
            return Err(Error::config("cleared-year input must be nonnegative"));
        }
        if let Some(th) = self.ess_threshold {
            if !(th > 0.0 && th <= 1.0) {
                return Err(Error::config("ESS threshold must lie in (0, 1]"));
            }
        }
        self.initial.validate()
    }

    pub fn step_options(&self) -> StepOptions {
        StepOptions { kappa: self.kappa, mediate_dpm_decay: self.mediate_dpm_decay, force_factor: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SocModel {
    variant: ModelVariant,
    site: Site,
    layout: PlantLayout,
    data: Dataset,
    priors: PriorSet,
    options: SocOptions,
}

/// The pieces of one likelihood evaluation.
struct Parts {
    /// Exact per-step terms: plant Kalman filter and IOM.
    exact: Vec<f64>,
    pf: FilterOutput,
}

impl SocModel {
    pub fn new(variant: ModelVariant, site: Site, data: Dataset, options: SocOptions) -> Result<Self> {
        options.validate()?;
        let layout = site.layout();
        layout.validate()?;
        layout.check_schedule(data.schedule())?;
        let priors = PriorSet::for_site(site, variant, &layout, data.n_fields());
        Ok(SocModel { variant, site, layout, data, priors, options })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn site(&self) -> Site {
        self.site
    }

    pub fn layout(&self) -> &PlantLayout {
        &self.layout
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn options(&self) -> &SocOptions {
        &self.options
    }

    pub fn priors(&self) -> &PriorSet {
        &self.priors
    }

    pub fn set_prior(&mut self, key: ParamKey, prior: Prior) -> Result<()> {
        self.priors.set(key, prior)
    }

    pub fn with_data(&self, data: Dataset) -> Result<Self> {
        if data.n_fields() != self.data.n_fields() {
            return Err(Error::contract("replacement dataset has a different number of fields"));
        }
        self.layout.check_schedule(data.schedule())?;
        Ok(SocModel { data, ..self.clone() })
    }

    pub fn free_keys(&self) -> Vec<ParamKey> {
        self.priors.free().map(|(k, _)| k).collect()
    }

    /// Channels the model scores.
    pub fn channels(&self) -> Vec<Channel> {
        let mut c = self.variant.carbon_channels().to_vec();
        c.extend(self.layout.channels());
        c
    }

    /// Full parameter vector from the free values, fixed values filled in.
    pub fn parameter_vector(&self, theta: &[f64]) -> ParameterVector {
        let mut pv = ParameterVector::new(self.data.n_fields());
        for (k, v) in self.priors.fixed() {
            pv.set(k, v);
        }
        for ((k, _), v) in self.priors.free().zip(theta) {
            pv.set(k, *v);
        }
        pv
    }

    /// Free values of a full parameter vector, in `param_names` order.
    pub fn theta_of(&self, pv: &ParameterVector) -> Vec<f64> {
        self.priors.free().map(|(k, _)| pv.get(k)).collect()
    }

    /// Prior density of the transfer proportions is zero where some flow
    /// would respire a negative amount.
    pub fn is_feasible(&self, pv: &ParameterVector) -> bool {
        CarbonParams::from_theta(self.variant, pv).is_feasible(self.variant)
    }

    fn initial_pools(&self, pv: &ParameterVector) -> Result<Vec<crate::domain::CarbonPools>> {
        let iom = pv.get(ParamKey::Iom);
        (0..self.data.n_fields())
            .map(|f| {
                let s = pv.get(ParamKey::InitialStock(f));
                if !(s > 0.0) || !(iom >= 0.0) {
                    return Err(Error::contract(format!("initial stocks must be positive, got {s} and IOM {iom}")));
                }
                Ok(initial_pools(self.variant, s, iom, &self.options.initial))
            })
            .collect()
    }

    fn evaluate(&self, theta: &[f64], stream: &RandomStream, keep_trajectory: bool) -> Result<Parts> {
        let pv = self.parameter_vector(theta);
        let steps = self.data.n_years();
        let rb = self.options.rao_blackwellise;
        let mut exact = vec![0.0; steps];
        let mut samplers = Vec::with_capacity(self.data.n_fields());
        for f in 0..self.data.n_fields() {
            let lgm = self.layout.linear_model(&pv, steps)?;
            let (obs, jac) = self.layout.observations(&self.data, f);
            if rb {
                let kf = kalman_filter(&lgm, &obs)?;
                add_increments(&mut exact, &kf.increments);
                add_increments(&mut exact, &jac);
                samplers.push(PlantSampler::conditional(&lgm, &obs)?);
            } else {
                samplers.push(PlantSampler::prior(&lgm, steps)?);
            }
        }

        let iom = pv.get(ParamKey::Iom);
        let iom_sd = pv.get(ParamKey::ObsIOM).sqrt();
        for f in 0..self.data.n_fields() {
            for (t, e) in exact.iter_mut().enumerate() {
                if let Some(y) = self.data.get(f, t, Channel::Iom) {
                    let r = (y.ln() - iom.ln()) / iom_sd;
                    *e += -y.ln() - iom_sd.ln() - 0.5 * LN_2PI - 0.5 * r * r;
                }
            }
        }

        let obs_var = |c: Channel| {
            let key = match c {
                Channel::Toc => ParamKey::ObsTOC,
                Channel::Poc => ParamKey::ObsPOC,
                Channel::Hum => ParamKey::ObsHUM,
                Channel::Iom => ParamKey::ObsIOM,
                other => self.layout.slots[self.layout.slot_of(other).expect("plant channel")].obs_var,
            };
            pv.get(key)
        };
        let carbon = CarbonParams::from_theta(self.variant, &pv);
        let inputs = InputParams::from_theta(&pv, self.layout.scheme, self.options.cleared_input);
        let initial = self.initial_pools(&pv)?;
        let options = FilterOptions { sort: true, ess_threshold: self.options.ess_threshold, keep_trajectory };
        let per_field = samplers
            .into_par_iter()
            .zip(initial)
            .enumerate()
            .map(|(f, (sampler, init))| {
                let model = CarbonFilter::new(
                    self.variant,
                    &self.layout,
                    &self.data,
                    f,
                    carbon,
                    inputs,
                    self.options.step_options(),
                    sampler,
                    init,
                    &obs_var,
                    !rb,
                );
                correlated_particle_filter(&model, &stream.group(f)?, options)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut pf = FilterOutput { increments: vec![0.0; steps], ..Default::default() };
        for out in &per_field {
            pf.log_likelihood += out.log_likelihood;
            add_increments(&mut pf.increments, &out.increments);
        }
        if keep_trajectory {
            pf.trajectory = (0..steps)
                .map(|t| per_field.iter().map(|o| o.trajectory.as_ref().map(|tr| tr[t][0])).collect::<Option<Vec<f64>>>())
                .collect();
        }
        Ok(Parts { exact, pf })
    }
}

impl LikelihoodModel for SocModel {
    fn param_names(&self) -> Vec<String> {
        self.priors.free().map(|(k, _)| k.to_string()).collect()
    }

    fn transforms(&self) -> Vec<Transform> {
        self.priors.free().map(|(_, p)| p.transform()).collect()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let lp: f64 = self.priors.free().zip(theta).map(|((_, p), v)| p.log_density(*v)).sum();
        if lp == f64::NEG_INFINITY || lp.is_nan() || !self.is_feasible(&self.parameter_vector(theta)) {
            return f64::NEG_INFINITY;
        }
        lp
    }

    fn sample_prior(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut theta = Vec::new();
        for _ in 0..10_000 {
            theta = self.priors.free().map(|(_, p)| p.sample(rng)).collect();
            if self.log_prior(&theta).is_finite() {
                break;
            }
        }
        theta
    }

    fn stream_layout(&self) -> StreamLayout {
        let d = self.layout.dim() + self.variant.dynamic_pools().len();
        StreamLayout::new(self.data.n_years(), self.options.particles, d).with_groups(self.data.n_fields())
    }

    fn estimate(&self, theta: &[f64], stream: &RandomStream, keep_trajectory: bool) -> Result<Estimate> {
        let parts = self.evaluate(theta, stream, keep_trajectory)?;
        let mut increments = parts.exact;
        add_increments(&mut increments, &parts.pf.increments);
        Ok(Estimate {
            log_likelihood: increments.iter().sum(),
            increments,
            trajectory: parts.pf.trajectory,
        })
    }

    fn n_steps(&self) -> usize {
        self.data.n_years()
    }

    fn observed_steps(&self) -> Vec<usize> {
        let channels = self.channels();
        (0..self.data.n_years()).filter(|&t| self.data.has_any(t, &channels)).collect()
    }

    fn truncated(&self, last: usize) -> Result<Self> {
        if last >= self.data.n_years() {
            return Err(Error::contract(format!("cannot truncate {} years at {last}", self.data.n_years())));
        }
        Ok(SocModel { data: self.data.truncated(last), ..self.clone() })
    }

    fn trajectory_labels(&self) -> Vec<String> {
        self.data.fields().to_vec()
    }

    /// Exact terms at `step`, plus the difference of the particle totals
    /// with and without year `step`, both run on the same stream.
    fn log_predictive(&self, theta: &[f64], step: usize, stream: &RandomStream) -> Result<f64> {
        let now = self.truncated(step)?.evaluate(theta, stream, false)?;
        let before = if step == 0 {
            0.0
        } else {
            self.truncated(step - 1)?.evaluate(theta, stream, false)?.pf.log_likelihood
        };
        Ok(now.exact[step] + now.pf.log_likelihood - before)
    }
}
