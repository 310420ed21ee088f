//! Carbon inputs and the pool transitions of the four model variants.

use serde::{Deserialize, Serialize};

use crate::domain::{clamp_bio_inflow, BioInflow, CarbonPools, ModelVariant, ParamKey, ParameterVector, Treatment};
use crate::error::{Error, Result};

/// How wheat-for-grain years turn plant matter into carbon input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputScheme {
    /// Grain and total dry matter are observed (Tarlee, Brigalow).
    Standard,
    /// Grain and straw are observed; straw is returned (Broadbalk).
    Rothamsted,
}

/// Plant dry matter in t/ha; `None` where the site does not track a crop.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlantMasses {
    pub grain_wheat: Option<f64>,
    pub wheat: Option<f64>,
    pub pasture: Option<f64>,
    pub grain_sorghum: Option<f64>,
    pub sorghum: Option<f64>,
    pub grain: Option<f64>,
    pub straw: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputParams {
    pub c: f64,
    pub r_w: f64,
    pub r_p: f64,
    pub r_s: f64,
    /// Fraction of the crop left above ground after a hay cut.
    pub p: f64,
    pub scheme: InputScheme,
    /// Input assigned to clearing years.
    pub cleared: f64,
}

impl InputParams {
    pub fn from_theta(theta: &ParameterVector, scheme: InputScheme, cleared: f64) -> Self {
        let get = |k| {
            let v = theta.get(k);
            if v.is_nan() {
                0.0
            } else {
                v
            }
        };
        InputParams {
            c: get(ParamKey::CarbonContent),
            r_w: get(ParamKey::RootShootWheat),
            r_p: get(ParamKey::RootShootPasture),
            r_s: get(ParamKey::RootShootSorghum),
            p: get(ParamKey::ResidueFraction),
            scheme,
            cleared,
        }
    }
}

fn need(v: Option<f64>, what: &str, t: Treatment) -> Result<f64> {
    v.ok_or_else(|| Error::config(format!("treatment {t} needs {what} dry matter, which this site does not model")))
}

/// Carbon entering the soil in one year. Above-ground residue after a grain
/// harvest is floored at zero when noise puts grain above total dry matter.
pub fn carbon_input(treatment: Treatment, m: &PlantMasses, q: &InputParams) -> Result<f64> {
    let c = q.c;
    let v = match (treatment, q.scheme) {
        (Treatment::Fallow, _) => 0.0,
        (Treatment::Cleared, _) => q.cleared,
        (Treatment::WheatGrain, InputScheme::Rothamsted) => {
            let (g, s) = (need(m.grain, "grain", treatment)?, need(m.straw, "straw", treatment)?);
            c * s + c * q.r_w * (g + s)
        }
        (Treatment::WheatGrain, InputScheme::Standard) => {
            let w = need(m.wheat, "wheat", treatment)?;
            let gw = need(m.grain_wheat, "wheat grain", treatment)?;
            c * (w - gw).max(0.0) + c * q.r_w * w
        }
        (Treatment::WheatHay, _) => {
            let w = need(m.wheat, "wheat", treatment)?;
            c * q.p * w + c * q.r_w * w
        }
        (Treatment::Pasture, _) => {
            let x = need(m.pasture, "pasture", treatment)?;
            c * x + c * q.r_p * x
        }
        (Treatment::PastureHay, _) => {
            let x = need(m.pasture, "pasture", treatment)?;
            c * q.p * x + c * q.r_p * x
        }
        (Treatment::SorghumGrain, _) => {
            let s = need(m.sorghum, "sorghum", treatment)?;
            let gs = need(m.grain_sorghum, "sorghum grain", treatment)?;
            c * (s - gs).max(0.0) + c * q.r_s * s
        }
        (Treatment::SorghumHay, _) => {
            let s = need(m.sorghum, "sorghum", treatment)?;
            c * q.p * s + c * q.r_s * s
        }
    };
    Ok(v.max(0.0))
}

/// Rates, transfer proportions and noise scales of the carbon sub-model.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CarbonParams {
    pub k_c: f64,
    pub k_d: f64,
    pub k_r: f64,
    pub k_h: f64,
    pub k_b: f64,
    pub pi_cb: f64,
    pub pi_bc: f64,
    pub pi_dh: f64,
    pub pi_rh: f64,
    pub pi_hh: f64,
    pub pi_bh: f64,
    pub pi_db: f64,
    pub pi_rb: f64,
    pub pi_hb: f64,
    pub pi_bb: f64,
    pub p_d: f64,
    /// Log-scale noise standard deviations in dynamic-pool order: (C, B) or
    /// (D, R, H, B).
    pub noise_sd: [f64; 4],
}

impl CarbonParams {
    pub fn from_theta(variant: ModelVariant, theta: &ParameterVector) -> Self {
        use ParamKey::*;
        let g = |k| {
            let v = theta.get(k);
            if v.is_nan() {
                0.0
            } else {
                v
            }
        };
        let sd = |k| g(k).max(0.0).sqrt();
        let noise_sd = if variant.is_five_pool() {
            [sd(Sigma2EtaD), sd(Sigma2EtaR), sd(Sigma2EtaH), sd(Sigma2EtaB)]
        } else {
            [sd(Sigma2EtaC), sd(Sigma2EtaB), 0.0, 0.0]
        };
        CarbonParams {
            k_c: g(DecayC),
            k_d: g(DecayD),
            k_r: g(DecayR),
            k_h: g(DecayH),
            k_b: g(DecayB),
            pi_cb: g(PiCB),
            pi_bc: g(PiBC),
            pi_dh: g(PiDH),
            pi_rh: g(PiRH),
            pi_hh: g(PiHH),
            pi_bh: g(PiBH),
            pi_db: g(PiDB),
            pi_rb: g(PiRB),
            pi_hb: g(PiHB),
            pi_bb: g(PiBB),
            p_d: g(DpmFraction),
            noise_sd,
        }
    }

    /// Fractions of each decomposition flow that leave the soil as CO2.
    /// Every one must be nonnegative for the model to conserve mass.
    pub fn respired_fractions(&self, variant: ModelVariant) -> Vec<f64> {
        if variant.is_five_pool() {
            vec![
                1.0 - self.pi_dh - self.pi_db,
                1.0 - self.pi_rh - self.pi_rb,
                1.0 - self.pi_hh - self.pi_hb,
                1.0 - self.pi_bh - self.pi_bb,
                1.0 - self.pi_bh,
            ]
        } else {
            vec![1.0 - self.pi_cb, 1.0 - self.pi_bb - self.pi_bc, 1.0 - self.pi_bc]
        }
    }

    pub fn is_feasible(&self, variant: ModelVariant) -> bool {
        self.respired_fractions(variant).iter().all(|f| *f >= 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    pub kappa: f64,
    /// Scale DPM survival by the mediation factor as well as its outflows.
    pub mediate_dpm_decay: bool,
    /// Override the mediation factor (testing and the regular reduction).
    #[serde(skip)]
    pub force_factor: Option<f64>,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { kappa: crate::domain::KAPPA_BIO, mediate_dpm_decay: true, force_factor: None }
    }
}

/// Deterministic part of one transition plus the bookkeeping around the
/// BIO clamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarbonStep {
    /// Pools before process noise.
    pub pools: CarbonPools,
    pub factor: f64,
    /// Flow headed for BIO before the carrying-capacity clamp.
    pub u: f64,
    pub inflow: BioInflow,
    /// Carbon lost to respiration this step.
    pub respired: f64,
}

fn check_pools(p: &CarbonPools) -> Result<()> {
    if p.all_nonnegative() {
        Ok(())
    } else {
        Err(Error::DegenerateState { step: 0, message: format!("negative or non-finite carbon pool: {p:?}") })
    }
}

/// One deterministic year of the carbon sub-model. Regular variants run
/// with `F = 1`.
pub fn carbon_step(
    variant: ModelVariant,
    q: &CarbonParams,
    prev: &CarbonPools,
    input: f64,
    opts: &StepOptions,
) -> Result<CarbonStep> {
    check_pools(prev)?;
    if !(input >= 0.0) || !input.is_finite() {
        return Err(Error::DegenerateState { step: 0, message: format!("carbon input must be nonnegative, got {input}") });
    }
    let total = prev.decomposable_total();
    let factor = match opts.force_factor {
        Some(f) => f,
        None if variant.is_biok() => crate::domain::mediation_factor(prev.bio, total, opts.kappa)?,
        None => 1.0,
    };
    // Fraction of a pool decomposed in one step at rate k.
    let frac = |k: f64| -(-k * factor * crate::domain::DELTA_T).exp_m1();
    let b = prev.bio;
    let d_b = b * frac(q.k_b);

    if variant.is_five_pool() {
        let (d, r, h) = (prev.dpm, prev.rpm, prev.hum);
        let d_d = d * frac(q.k_d);
        let d_r = r * frac(q.k_r);
        let d_h = h * frac(q.k_h);
        let u = d_d * q.pi_db + d_r * q.pi_rb + d_h * q.pi_hb + d_b * q.pi_bb;
        let inflow = clamp_bio_inflow(u, total, b, opts.kappa);
        let d_survive = if opts.mediate_dpm_decay {
            d - d_d
        } else {
            d * (-q.k_d * crate::domain::DELTA_T).exp()
        };
        let pools = CarbonPools::five_pool(
            d_survive + q.p_d * input,
            r - d_r + (1.0 - q.p_d) * input,
            h - d_h + d_d * q.pi_dh + d_r * q.pi_rh + d_h * q.pi_hh + d_b * q.pi_bh + q.pi_bh * inflow.overflow,
            b - d_b + inflow.accepted,
            prev.iom,
        );
        let respired = (d - d_survive - d_d * (q.pi_dh + q.pi_db))
            + d_r * (1.0 - q.pi_rh - q.pi_rb)
            + d_h * (1.0 - q.pi_hh - q.pi_hb)
            + d_b * (1.0 - q.pi_bh - q.pi_bb)
            + (1.0 - q.pi_bh) * inflow.overflow;
        Ok(CarbonStep { pools, factor, u, inflow, respired })
    } else {
        let c = prev.amalgam;
        let d_c = c * frac(q.k_c);
        let u = d_c * q.pi_cb + d_b * q.pi_bb;
        let inflow = clamp_bio_inflow(u, total, b, opts.kappa);
        let pools = CarbonPools::three_pool(
            c - d_c + input + q.pi_bc * inflow.overflow + d_b * q.pi_bc,
            b - d_b + inflow.accepted,
            prev.iom,
        );
        let respired =
            d_c * (1.0 - q.pi_cb) + d_b * (1.0 - q.pi_bb - q.pi_bc) + (1.0 - q.pi_bc) * inflow.overflow;
        Ok(CarbonStep { pools, factor, u, inflow, respired })
    }
}

/// Multiplies each dynamic pool by `exp(sd * z)`; `z` holds one normal per
/// dynamic pool.
pub fn apply_process_noise(variant: ModelVariant, q: &CarbonParams, pools: &CarbonPools, z: &[f64]) -> CarbonPools {
    let s = &q.noise_sd;
    let mut out = *pools;
    if variant.is_five_pool() {
        out.dpm *= (s[0] * z[0]).exp();
        out.rpm *= (s[1] * z[1]).exp();
        out.hum *= (s[2] * z[2]).exp();
        out.bio *= (s[3] * z[3]).exp();
    } else {
        out.amalgam *= (s[0] * z[0]).exp();
        out.bio *= (s[1] * z[1]).exp();
    }
    out
}

/// A full stochastic transition: deterministic step then log-normal noise.
pub fn step(
    variant: ModelVariant,
    q: &CarbonParams,
    prev: &CarbonPools,
    input: f64,
    z: &[f64],
    opts: &StepOptions,
) -> Result<CarbonPools> {
    let s = carbon_step(variant, q, prev, input, opts)?;
    Ok(apply_process_noise(variant, q, &s.pools, z))
}

/// Initial pools from a field's decomposable stock `s`: BIO holds
/// `bio_fraction * s`; the rest is split by the variant.
pub fn initial_pools(variant: ModelVariant, s: f64, iom: f64, fr: &InitialFractions) -> CarbonPools {
    let b = fr.bio * s;
    if variant.is_five_pool() {
        let d = fr.dpm * s;
        let r = fr.rpm * s;
        CarbonPools::five_pool(d, r, s - b - d - r, b, iom)
    } else {
        CarbonPools::three_pool(s - b, b, iom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialFractions {
    pub bio: f64,
    pub dpm: f64,
    pub rpm: f64,
}

impl Default for InitialFractions {
    fn default() -> Self {
        InitialFractions { bio: crate::domain::KAPPA_BIO / 2.0, dpm: 0.02, rpm: 0.15 }
    }
}

impl InitialFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.bio, self.dpm, self.rpm];
        if all.iter().any(|f| !(0.0..1.0).contains(f)) || self.bio + self.dpm + self.rpm >= 1.0 {
            return Err(Error::config("initial pool fractions must be in [0, 1) and sum to less than 1"));
        }
        Ok(())
    }
}
