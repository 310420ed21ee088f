use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::data::Channel;
use super::params::ParamKey;
use super::pools::PoolId;
use crate::error::{Error, Result};

/// The four SOC model variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    ThreePoolRegular,
    ThreePoolBioK,
    FivePoolRegular,
    FivePoolBioK,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::ThreePoolRegular,
        ModelVariant::ThreePoolBioK,
        ModelVariant::FivePoolRegular,
        ModelVariant::FivePoolBioK,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::ThreePoolRegular => "three-pool-regular",
            ModelVariant::ThreePoolBioK => "three-pool-biok",
            ModelVariant::FivePoolRegular => "five-pool-regular",
            ModelVariant::FivePoolBioK => "five-pool-biok",
        }
    }

    /// Decay rates are scaled by the microbial mediation factor.
    pub fn is_biok(self) -> bool {
        matches!(self, ModelVariant::ThreePoolBioK | ModelVariant::FivePoolBioK)
    }

    pub fn is_five_pool(self) -> bool {
        matches!(self, ModelVariant::FivePoolRegular | ModelVariant::FivePoolBioK)
    }

    /// Latent pools that evolve stochastically (IOM is constant).
    pub fn dynamic_pools(self) -> &'static [PoolId] {
        if self.is_five_pool() {
            &[PoolId::Dpm, PoolId::Rpm, PoolId::Hum, PoolId::Bio]
        } else {
            &[PoolId::Amalgam, PoolId::Bio]
        }
    }

    /// Soil-carbon channels scored by this variant's observation model.
    pub fn carbon_channels(self) -> &'static [Channel] {
        if self.is_five_pool() {
            &[Channel::Toc, Channel::Iom, Channel::Poc, Channel::Hum]
        } else {
            &[Channel::Toc, Channel::Iom]
        }
    }

    /// Active soil-carbon parameters, excluding initial stocks and plant
    /// sub-model parameters.
    pub fn carbon_params(self) -> &'static [ParamKey] {
        use ParamKey::*;
        if self.is_five_pool() {
            &[
                Iom, DecayD, DecayR, DecayH, DecayB, DpmFraction, PiDH, PiRH, PiHH, PiBH, PiDB, PiRB, PiHB, PiBB,
                Sigma2EtaD, Sigma2EtaR, Sigma2EtaH, Sigma2EtaB,
            ]
        } else {
            &[Iom, DecayC, DecayB, PiCB, PiBB, PiBC, Sigma2EtaC, Sigma2EtaB]
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        ModelVariant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::config(format!("unknown model variant '{s}'")))
    }
}

impl Serialize for ModelVariant {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ModelVariant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
