//! Prior families and the per-site prior tables.

use rand::RngCore;
use rand_distr::{Beta, Distribution, Gamma, LogNormal, Normal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};
use statrs::function::gamma::ln_gamma;

use super::plant::PlantLayout;
use super::Site;
use crate::domain::{ModelVariant, ParamKey};
use crate::error::{Error, Result};
use crate::linalg::LN_2PI;
use crate::model::Transform;

/// One prior. `sd` is a standard deviation, not a variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    LogNormal { mu: f64, sd: f64 },
    TruncatedNormal { mean: f64, sd: f64, lower: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { lower: f64, upper: f64 },
    Beta { a: f64, b: f64 },
    InverseGamma { shape: f64, scale: f64 },
    Fixed { value: f64 },
}

fn std_normal() -> StatNormal {
    StatNormal::new(0.0, 1.0).expect("standard normal")
}

fn normal_lpdf(x: f64, m: f64, s: f64) -> f64 {
    -0.5 * LN_2PI - s.ln() - 0.5 * ((x - m) / s).powi(2)
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::LogNormal { mu, sd } => mu.is_finite() && sd > 0.0,
            Prior::TruncatedNormal { mean, sd, lower } => mean.is_finite() && sd > 0.0 && lower.is_finite(),
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0,
            Prior::Uniform { lower, upper } => lower.is_finite() && upper.is_finite() && lower < upper,
            Prior::Beta { a, b } => a > 0.0 && b > 0.0,
            Prior::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0,
            Prior::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid prior {self:?}")))
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Prior::Fixed { .. })
    }

    /// Log density; `-inf` outside the support. Fixed priors contribute 0.
    pub fn log_density(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Prior::LogNormal { mu, sd } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                normal_lpdf(x.ln(), mu, sd) - x.ln()
            }
            Prior::TruncatedNormal { mean, sd, lower } => {
                if x < lower {
                    return f64::NEG_INFINITY;
                }
                normal_lpdf(x, mean, sd) - std_normal().sf((lower - mean) / sd).ln()
            }
            Prior::Normal { mean, sd } => normal_lpdf(x, mean, sd),
            Prior::Uniform { lower, upper } => {
                if x < lower || x > upper {
                    return f64::NEG_INFINITY;
                }
                -(upper - lower).ln()
            }
            Prior::Beta { a, b } => {
                if !(0.0..=1.0).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p()
            }
            Prior::InverseGamma { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
            }
            Prior::Fixed { .. } => 0.0,
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match *self {
            Prior::LogNormal { mu, sd } => LogNormal::new(mu, sd).expect("valid prior").sample(rng),
            Prior::TruncatedNormal { mean, sd, lower } => {
                let n = std_normal();
                let lo = n.cdf((lower - mean) / sd);
                let u: f64 = Uniform::new(0.0, 1.0).expect("unit interval").sample(rng);
                let p = lo + u * (1.0 - lo);
                (mean + sd * n.inverse_cdf(p.min(1.0 - 1e-16))).max(lower)
            }
            Prior::Normal { mean, sd } => Normal::new(mean, sd).expect("valid prior").sample(rng),
            Prior::Uniform { lower, upper } => Uniform::new(lower, upper).expect("valid prior").sample(rng),
            Prior::Beta { a, b } => Beta::new(a, b).expect("valid prior").sample(rng),
            Prior::InverseGamma { shape, scale } => {
                1.0 / Gamma::new(shape, 1.0 / scale).expect("valid prior").sample(rng)
            }
            Prior::Fixed { value } => value,
        }
    }

    /// Unconstrained scale the sampler proposes on.
    pub fn transform(&self) -> Transform {
        match *self {
            Prior::LogNormal { .. } | Prior::InverseGamma { .. } => Transform::Log { lower: 0.0 },
            Prior::TruncatedNormal { lower, .. } => Transform::Log { lower },
            Prior::Normal { .. } | Prior::Fixed { .. } => Transform::Identity,
            Prior::Uniform { lower, upper } => Transform::Logit { lower, upper },
            Prior::Beta { .. } => Transform::Logit { lower: 0.0, upper: 1.0 },
        }
    }
}

/// Ordered parameter priors for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    entries: Vec<(ParamKey, Prior)>,
}

impl PriorSet {
    pub fn get(&self, key: ParamKey) -> Option<&Prior> {
        self.entries.iter().find(|(k, _)| *k == key).map(|(_, p)| p)
    }

    pub fn entries(&self) -> &[(ParamKey, Prior)] {
        &self.entries
    }

    /// Replaces the prior of a parameter the model already uses.
    pub fn set(&mut self, key: ParamKey, prior: Prior) -> Result<()> {
        prior.validate()?;
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => {
                slot.1 = prior;
                Ok(())
            }
            None => Err(Error::config(format!("parameter {key} is not used by this model"))),
        }
    }

    /// Parameters the sampler explores.
    pub fn free(&self) -> impl Iterator<Item = (ParamKey, Prior)> + '_ {
        self.entries.iter().copied().filter(|(_, p)| !p.is_fixed())
    }

    pub fn fixed(&self) -> impl Iterator<Item = (ParamKey, f64)> + '_ {
        self.entries.iter().filter_map(|(k, p)| match p {
            Prior::Fixed { value } => Some((*k, *value)),
            _ => None,
        })
    }

    /// Default table for a site, variant and number of fields.
    pub fn for_site(site: Site, variant: ModelVariant, layout: &PlantLayout, n_fields: usize) -> PriorSet {
        use ParamKey::*;
        let tn = |mean, sd| Prior::TruncatedNormal { mean, sd, lower: 0.0 };
        let ln = |mu, sd| Prior::LogNormal { mu, sd };
        let nm = |mean, sd| Prior::Normal { mean, sd };
        let unit = Prior::Uniform { lower: 0.0, upper: 1.0 };
        let ar = Prior::Uniform { lower: -1.0, upper: 1.0 };
        let var = tn(0.0, 0.5);
        let fixed = |value| Prior::Fixed { value };

        let table = |key: ParamKey| -> Prior {
            match (site, key) {
                (Site::Brigalow, InitialStock(_)) => tn(60.0, 5.0),
                (Site::Broadbalk, InitialStock(_)) => fixed(28.8),
                (_, InitialStock(_)) => tn(40.0, 5.0),
                (Site::Brigalow, Iom) => tn(12.0, 2.0),
                (Site::Broadbalk, Iom) => tn(17.0, 2.0),
                (_, Iom) => tn(4.0, 0.5),
                (Site::Tarlee, DecayD) => ln(-2.71, 0.127),
                (_, DecayD) => tn(10.0, 5.0),
                (Site::Tarlee, DecayR) => ln(-2.5, 0.135),
                (_, DecayR) => tn(0.15, 0.075),
                (_, DecayC) => ln(-2.71, 0.127),
                (_, DecayB) => tn(0.66, 0.3),
                (_, DecayH) => tn(0.02, 0.01),
                (_, CarbonContent) => nm(0.45, 0.01),
                (_, RootShootWheat) | (_, RootShootSorghum) => nm(0.5, 0.067),
                (_, RootShootPasture) => nm(1.0, 0.125),
                (_, ResidueFraction) => Prior::Beta { a: 89.9, b: 809.1 },
                (_, HarvestIndexWheat) => ln(0.825, 0.36),
                (_, HarvestIndexSorghum) => ln(0.46, 1.6),
                (_, MuPasture) => nm(1.41, 1.81),
                (_, MuGrainWheat) | (_, MuGrainSorghum) | (_, MuGrain) | (_, MuStraw) => nm(0.42, 1.18),
                (_, RhoGrainWheat) | (_, RhoGrainSorghum) | (_, RhoPasture) | (_, RhoGrain) | (_, RhoStraw) => ar,
                (Site::Brigalow, Sigma2Sorghum) => Prior::InverseGamma { shape: 0.01, scale: 0.01 },
                (_, ObsTOC) => fixed(0.025),
                (_, ObsPOC) => fixed(0.9),
                (_, ObsGrainWheat) | (_, ObsGrainSorghum) | (_, ObsGrain) => fixed(0.023),
                (_, ObsWheat) | (_, ObsSorghum) => fixed(0.133),
                (_, ObsPasture) | (_, ObsStraw) => fixed(0.067),
                (_, ObsIOM) => fixed(0.01),
                (_, ObsHUM) => fixed(0.1),
                (_, k) => match k.kind() {
                    crate::domain::ParamKind::Variance => var,
                    _ => unit,
                },
            }
        };

        let mut keys: Vec<ParamKey> = (0..n_fields).map(InitialStock).collect();
        keys.extend(variant.carbon_params().iter().copied());
        keys.push(CarbonContent);
        keys.extend(layout.input_params());
        keys.extend(layout.plant_params());
        keys.push(ObsTOC);
        keys.push(ObsIOM);
        if variant.is_five_pool() {
            keys.push(ObsPOC);
            keys.push(ObsHUM);
        }
        keys.extend(layout.slots.iter().map(|s| s.obs_var));
        let mut entries: Vec<(ParamKey, Prior)> = Vec::with_capacity(keys.len());
        for k in keys {
            if !entries.iter().any(|(e, _)| *e == k) {
                entries.push((k, table(k)));
            }
        }
        PriorSet { entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn lognormal_density_closed_form() {
        let p = Prior::LogNormal { mu: -2.71, sd: 0.127 };
        let x = (-2.71f64).exp();
        let want = -(x * 0.127 * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((p.log_density(x) - want).abs() < 1e-12);
        assert_eq!(p.log_density(-1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_unit_is_flat() {
        assert_eq!(Prior::Uniform { lower: 0.0, upper: 1.0 }.log_density(0.5), 0.0);
    }

    #[test]
    fn truncated_normal_normalises() {
        let p = Prior::TruncatedNormal { mean: 0.0, sd: 0.5, lower: 0.0 };
        let h = 1e-4;
        let total: f64 = (0..60_000).map(|i| p.log_density((i as f64 + 0.5) * h).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        assert_eq!(p.log_density(-0.1), f64::NEG_INFINITY);
    }

    #[test]
    fn inverse_gamma_and_beta_normalise() {
        let ig = Prior::InverseGamma { shape: 3.0, scale: 2.0 };
        let beta = Prior::Beta { a: 2.5, b: 4.0 };
        let h = 1e-4;
        let t1: f64 = (0..400_000).map(|i| ig.log_density((i as f64 + 0.5) * h).exp() * h).sum();
        let t2: f64 = (0..10_000).map(|i| beta.log_density((i as f64 + 0.5) * h).exp() * h).sum();
        assert!((t1 - 1.0).abs() < 1e-4, "{t1}");
        assert!((t2 - 1.0).abs() < 1e-6, "{t2}");
    }

    #[test]
    fn samples_stay_in_support() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let priors = [
            Prior::TruncatedNormal { mean: 0.02, sd: 0.01, lower: 0.0 },
            Prior::Beta { a: 89.9, b: 809.1 },
            Prior::InverseGamma { shape: 2.0, scale: 1.0 },
            Prior::Uniform { lower: -1.0, upper: 1.0 },
        ];
        for p in priors {
            for _ in 0..2000 {
                assert!(p.log_density(p.sample(&mut rng)).is_finite(), "{p:?}");
            }
        }
        let tn = Prior::TruncatedNormal { mean: 40.0, sd: 5.0, lower: 0.0 };
        let m: f64 = (0..20_000).map(|_| tn.sample(&mut rng)).sum::<f64>() / 20_000.0;
        assert!((m - 40.0).abs() < 0.15);
    }
}
