//! Run configuration: one TOML document, paths relative to it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cpm::SamplerConfig;
use crate::domain::{ModelVariant, ParamKey};
use crate::error::{Error, Result};
use crate::soc::{ObservationPlan, Prior, Site, SocOptions};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectMethod {
    LfoCv,
    Waic,
    #[default]
    None,
}

impl fmt::Display for SelectMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectMethod::LfoCv => "lfo-cv",
            SelectMethod::Waic => "waic",
            SelectMethod::None => "none",
        })
    }
}

impl FromStr for SelectMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lfo-cv" | "lfo" => Ok(SelectMethod::LfoCv),
            "waic" => Ok(SelectMethod::Waic),
            "none" => Ok(SelectMethod::None),
            _ => Err(Error::config(format!("unknown selection method '{s}' (lfo-cv, waic, none)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LfoSettings {
    /// Observed years required before the first prediction.
    pub min_obs: usize,
    /// Posterior draws per chain used for each predictive (0: all).
    pub predictive_draws: usize,
    pub rhat_threshold: f64,
}

impl Default for LfoSettings {
    fn default() -> Self {
        LfoSettings { min_obs: 12, predictive_draws: 0, rhat_threshold: 1.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub seed: u64,
    /// Seed of the prior draw that fills parameters missing from `truth`.
    pub prior_seed: u64,
    /// Chance that a year after the first has soil-carbon measurements.
    pub carbon_fraction: f64,
    pub plant: bool,
    pub noise: bool,
    pub truth: BTreeMap<String, f64>,
    /// Field identifiers when the schedule comes from a site preset.
    pub fields: Option<Vec<String>>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings {
            seed: 1,
            prior_seed: 1,
            carbon_fraction: 1.0,
            plant: true,
            noise: true,
            truth: BTreeMap::new(),
            fields: None,
        }
    }
}

impl SimulateSettings {
    pub fn plan(&self) -> ObservationPlan {
        ObservationPlan { carbon_fraction: self.carbon_fraction, plant: self.plant, noise: self.noise, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelVariant,
    pub site: Site,
    /// Observations CSV (`field,year,channel,value`).
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Schedule CSV (`field,year,treatment`); the site preset when absent.
    #[serde(default)]
    pub schedule: Option<PathBuf>,
    pub output: PathBuf,
    #[serde(default)]
    pub select: SelectMethod,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub soc: SocOptions,
    #[serde(default)]
    pub lfo: LfoSettings,
    #[serde(default)]
    pub simulate: SimulateSettings,
    /// Prior overrides by parameter name, e.g. `K_C`.
    #[serde(default)]
    pub priors: BTreeMap<String, Prior>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Reads a config file and makes its paths absolute relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.data.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.schedule.as_mut() {
            rebase(p);
        }
        rebase(&mut cfg.output);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.soc.validate()?;
        for (name, prior) in &self.priors {
            name.parse::<ParamKey>()?;
            prior.validate()?;
        }
        for name in self.simulate.truth.keys() {
            name.parse::<ParamKey>()?;
        }
        if self.lfo.min_obs == 0 {
            return Err(Error::config("lfo.min_obs must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads must be at least 1"));
        }
        for p in [&self.data, &self.schedule].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}
