//! Static unknowns of the SOC models and their names.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Support class of a parameter, used for validation and for picking the
/// unconstrained transform the sampler proposes in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Decay rate, strictly positive.
    Rate,
    /// Transfer or partition proportion in `[0, 1]`.
    Proportion,
    /// AR(1) coefficient in `(-1, 1)`.
    Autoregressive,
    /// Variance, strictly positive.
    Variance,
    /// Positive physical quantity (stocks, ratios, indices, carbon content).
    Positive,
    /// Unbounded location.
    Real,
}

macro_rules! param_keys {
    ($($variant:ident => ($name:literal, $kind:ident)),* $(,)?) => {
        /// Identifier of one entry of a [`ParameterVector`].
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum ParamKey {
            $($variant,)*
            /// Initial decomposable carbon stock of a field (0-based index).
            InitialStock(usize),
        }

        impl ParamKey {
            /// Every scalar key, in storage order.
            pub const SCALARS: &'static [ParamKey] = &[$(ParamKey::$variant),*];

            fn scalar_name(self) -> Option<&'static str> {
                match self {
                    $(ParamKey::$variant => Some($name),)*
                    ParamKey::InitialStock(_) => None,
                }
            }

            pub fn kind(self) -> ParamKind {
                match self {
                    $(ParamKey::$variant => ParamKind::$kind,)*
                    ParamKey::InitialStock(_) => ParamKind::Positive,
                }
            }
        }
    };
}

param_keys! {
    DecayC => ("K_C", Rate),
    DecayD => ("K_D", Rate),
    DecayB => ("K_B", Rate),
    DecayR => ("K_R", Rate),
    DecayH => ("K_H", Rate),
    PiDH => ("pi_DH", Proportion),
    PiRH => ("pi_RH", Proportion),
    PiHH => ("pi_HH", Proportion),
    PiBH => ("pi_BH", Proportion),
    PiDB => ("pi_DB", Proportion),
    PiRB => ("pi_RB", Proportion),
    PiHB => ("pi_HB", Proportion),
    PiBB => ("pi_BB", Proportion),
    PiCB => ("pi_CB", Proportion),
    PiBC => ("pi_BC", Proportion),
    DpmFraction => ("P_D", Proportion),
    CarbonContent => ("c", Positive),
    RootShootWheat => ("r_W", Positive),
    RootShootPasture => ("r_P", Positive),
    RootShootSorghum => ("r_S", Positive),
    ResidueFraction => ("p", Proportion),
    HarvestIndexWheat => ("h_W", Positive),
    HarvestIndexSorghum => ("h_S", Positive),
    MuGrainWheat => ("mu_GW", Real),
    MuGrainSorghum => ("mu_GS", Real),
    MuPasture => ("mu_P", Real),
    MuGrain => ("mu_G", Real),
    MuStraw => ("mu_Str", Real),
    RhoGrainWheat => ("rho_GW", Autoregressive),
    RhoGrainSorghum => ("rho_GS", Autoregressive),
    RhoPasture => ("rho_P", Autoregressive),
    RhoGrain => ("rho_G", Autoregressive),
    RhoStraw => ("rho_Str", Autoregressive),
    Sigma2Eta => ("sigma2_eta", Variance),
    Sigma2EtaC => ("sigma2_etaC", Variance),
    Sigma2EtaD => ("sigma2_etaD", Variance),
    Sigma2EtaB => ("sigma2_etaB", Variance),
    Sigma2EtaR => ("sigma2_etaR", Variance),
    Sigma2EtaH => ("sigma2_etaH", Variance),
    Sigma2GrainWheat => ("sigma2_GW", Variance),
    Sigma2GrainSorghum => ("sigma2_GS", Variance),
    Sigma2Wheat => ("sigma2_W", Variance),
    Sigma2Sorghum => ("sigma2_S", Variance),
    Sigma2Pasture => ("sigma2_P", Variance),
    Sigma2Grain => ("sigma2_G", Variance),
    Sigma2Straw => ("sigma2_Str", Variance),
    ObsTOC => ("sigma2_epsTOC", Variance),
    ObsPOC => ("sigma2_epsPOC", Variance),
    ObsGrainWheat => ("sigma2_epsGW", Variance),
    ObsGrainSorghum => ("sigma2_epsGS", Variance),
    ObsWheat => ("sigma2_epsW", Variance),
    ObsSorghum => ("sigma2_epsS", Variance),
    ObsPasture => ("sigma2_epsP", Variance),
    ObsIOM => ("sigma2_epsIOM", Variance),
    ObsHUM => ("sigma2_epsH", Variance),
    ObsGrain => ("sigma2_epsG", Variance),
    ObsStraw => ("sigma2_epsStr", Variance),
    Iom => ("X_IOM", Positive),
}

impl ParamKey {
    fn scalar_index(self) -> Option<usize> {
        ParamKey::SCALARS.iter().position(|k| *k == self)
    }
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamKey::InitialStock(i) => write!(f, "X_C0[{}]", i + 1),
            k => f.write_str(k.scalar_name().expect("scalar key")),
        }
    }
}

impl FromStr for ParamKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("X_C0[").and_then(|r| r.strip_suffix(']')) {
            let idx: usize = rest
                .parse()
                .map_err(|_| Error::config(format!("bad initial-stock index in '{s}'")))?;
            if idx == 0 {
                return Err(Error::config("initial-stock indices are 1-based"));
            }
            return Ok(ParamKey::InitialStock(idx - 1));
        }
        ParamKey::SCALARS
            .iter()
            .copied()
            .find(|k| k.scalar_name() == Some(s))
            .ok_or_else(|| Error::config(format!("unknown parameter '{s}'")))
    }
}

impl Serialize for ParamKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParamKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Full parameter vector. Entries a variant does not use are simply never read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    scalars: Vec<f64>,
    initial_stock: Vec<f64>,
}

impl ParameterVector {
    pub fn new(n_fields: usize) -> Self {
        ParameterVector { scalars: vec![f64::NAN; ParamKey::SCALARS.len()], initial_stock: vec![f64::NAN; n_fields] }
    }

    pub fn n_fields(&self) -> usize {
        self.initial_stock.len()
    }

    pub fn get(&self, key: ParamKey) -> f64 {
        match key {
            ParamKey::InitialStock(i) => self.initial_stock[i],
            k => self.scalars[k.scalar_index().expect("scalar key")],
        }
    }

    pub fn set(&mut self, key: ParamKey, value: f64) {
        match key {
            ParamKey::InitialStock(i) => self.initial_stock[i] = value,
            k => {
                let idx = k.scalar_index().expect("scalar key");
                self.scalars[idx] = value;
            }
        }
    }

    pub fn with(mut self, key: ParamKey, value: f64) -> Self {
        self.set(key, value);
        self
    }

    pub fn initial_stocks(&self) -> &[f64] {
        &self.initial_stock
    }

    /// Checks the support of every listed key.
    pub fn validate(&self, keys: &[ParamKey]) -> Result<()> {
        for &k in keys {
            let v = self.get(k);
            if !in_support(k.kind(), v) {
                return Err(Error::contract(format!("parameter {k} = {v} is outside its support")));
            }
        }
        Ok(())
    }
}

pub fn in_support(kind: ParamKind, v: f64) -> bool {
    if !v.is_finite() {
        return false;
    }
    match kind {
        ParamKind::Rate | ParamKind::Variance | ParamKind::Positive => v > 0.0,
        ParamKind::Proportion => (0.0..=1.0).contains(&v),
        ParamKind::Autoregressive => v > -1.0 && v < 1.0,
        ParamKind::Real => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for &k in ParamKey::SCALARS {
            assert_eq!(k.to_string().parse::<ParamKey>().unwrap(), k);
        }
        let k: ParamKey = "X_C0[3]".parse().unwrap();
        assert_eq!(k, ParamKey::InitialStock(2));
        assert_eq!(k.to_string(), "X_C0[3]");
        assert!("X_C0[0]".parse::<ParamKey>().is_err());
        assert!("K_Z".parse::<ParamKey>().is_err());
    }

    #[test]
    fn validation_catches_support_violations() {
        let theta = ParameterVector::new(1)
            .with(ParamKey::DecayC, 0.1)
            .with(ParamKey::PiCB, 1.2)
            .with(ParamKey::RhoPasture, 0.5);
        assert!(theta.validate(&[ParamKey::DecayC, ParamKey::RhoPasture]).is_ok());
        assert!(theta.validate(&[ParamKey::PiCB]).is_err());
        assert!(theta.validate(&[ParamKey::InitialStock(0)]).is_err());
        assert!(!in_support(ParamKind::Autoregressive, 1.0));
        assert!(!in_support(ParamKind::Variance, 0.0));
    }
}
