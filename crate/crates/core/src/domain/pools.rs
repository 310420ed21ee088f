//! Carbon pools, the per-field latent state, and the two microbial
//! carrying-capacity primitives shared by every BIO-K variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Microbial carrying capacity as a fraction of decomposable carbon.
pub const KAPPA_BIO: f64 = 0.05;

/// Model time step in years.
pub const DELTA_T: f64 = 1.0;

/// Maximum number of plant dry-matter series tracked per field.
pub const MAX_PLANT_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoolId {
    Dpm,
    Rpm,
    Hum,
    Bio,
    Iom,
    /// Merged DPM + RPM + HUM pool of the three-pool model.
    Amalgam,
}

/// Carbon stocks of one field in t/ha. Pools a variant does not use stay at 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CarbonPools {
    pub amalgam: f64,
    pub dpm: f64,
    pub rpm: f64,
    pub hum: f64,
    pub bio: f64,
    pub iom: f64,
}

impl CarbonPools {
    pub fn three_pool(amalgam: f64, bio: f64, iom: f64) -> Self {
        CarbonPools { amalgam, bio, iom, ..Default::default() }
    }

    pub fn five_pool(dpm: f64, rpm: f64, hum: f64, bio: f64, iom: f64) -> Self {
        CarbonPools { dpm, rpm, hum, bio, iom, ..Default::default() }
    }

    pub fn get(&self, pool: PoolId) -> f64 {
        match pool {
            PoolId::Dpm => self.dpm,
            PoolId::Rpm => self.rpm,
            PoolId::Hum => self.hum,
            PoolId::Bio => self.bio,
            PoolId::Iom => self.iom,
            PoolId::Amalgam => self.amalgam,
        }
    }

    /// Total decomposable carbon: every pool except IOM.
    pub fn decomposable_total(&self) -> f64 {
        self.amalgam + self.dpm + self.rpm + self.hum + self.bio
    }

    /// Total organic carbon, IOM included.
    pub fn total_organic(&self) -> f64 {
        self.decomposable_total() + self.iom
    }

    /// Particulate organic carbon (DPM + RPM + BIO), five-pool variants only.
    pub fn particulate(&self) -> f64 {
        self.dpm + self.rpm + self.bio
    }

    pub fn all_nonnegative(&self) -> bool {
        [self.amalgam, self.dpm, self.rpm, self.hum, self.bio, self.iom]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite())
    }
}

/// Log-scale plant dry-matter states of one field; the meaning of each slot
/// is fixed by the site's plant layout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub log: [f64; MAX_PLANT_DIM],
}

impl PlantState {
    pub fn mass(&self, slot: usize) -> f64 {
        self.log[slot].exp()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub carbon: CarbonPools,
    pub plant: PlantState,
}

/// Latent state of every field at one year.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub fields: Vec<FieldState>,
}

impl StateVector {
    pub fn total_decomposable(&self) -> f64 {
        self.fields.iter().map(|f| f.carbon.decomposable_total()).sum()
    }
}

/// `F = X_B / (X_Total * kappa)`, the factor that scales every mediated
/// decay rate.
pub fn mediation_factor(x_bio: f64, x_total: f64, kappa: f64) -> Result<f64> {
    if !(x_total > 0.0) || !x_total.is_finite() {
        return Err(Error::DegenerateState {
            step: 0,
            message: format!("decomposable total must be positive, got {x_total}"),
        });
    }
    Ok(x_bio.max(0.0) / (x_total * kappa))
}

/// Mediation factor evaluated on a field's pools.
pub fn decay_mediation_factor(pools: &CarbonPools, kappa: f64) -> Result<f64> {
    mediation_factor(pools.bio, pools.decomposable_total(), kappa)
}

/// Split of the carbon flow `U` headed into BIO.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BioInflow {
    pub accepted: f64,
    pub overflow: f64,
}

/// Accept as much of `u` as the BIO headroom `kappa * x_total - x_bio`
/// allows; the rest overflows. Negative headroom accepts nothing.
///
/// `accepted + overflow == u` holds exactly in floating point: the overflow
/// is rounded first and the accepted part recovered from it, which is exact
/// by Sterbenz's lemma on whichever side of `u / 2` the overflow falls.
pub fn clamp_bio_inflow(u: f64, x_total: f64, x_bio: f64, kappa: f64) -> BioInflow {
    debug_assert!(u >= 0.0, "inflow must be nonnegative");
    let headroom = (kappa * x_total - x_bio).max(0.0);
    let target = u.min(headroom);
    let overflow = u - target;
    let accepted = u - overflow;
    BioInflow { accepted, overflow }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mediation_is_one_at_capacity() {
        let f = mediation_factor(0.05 * 40.0, 40.0, KAPPA_BIO).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mediation_is_zero_without_microbes() {
        assert_eq!(mediation_factor(0.0, 40.0, KAPPA_BIO).unwrap(), 0.0);
    }

    #[test]
    fn mediation_half_capacity() {
        // 1.0 / (40 * 0.05) = 0.5
        let f = mediation_factor(1.0, 40.0, KAPPA_BIO).unwrap();
        assert!((f - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mediation_rejects_empty_stock() {
        assert!(matches!(
            mediation_factor(1.0, 0.0, KAPPA_BIO),
            Err(Error::DegenerateState { .. })
        ));
        assert!(mediation_factor(0.0, -1.0, KAPPA_BIO).is_err());
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_bio_inflow(0.0, 10.0, 0.0, KAPPA_BIO), BioInflow { accepted: 0.0, overflow: 0.0 });
        // headroom 0.05 * 20 - 0.5 = 0.5
        let c = clamp_bio_inflow(0.3, 20.0, 0.5, KAPPA_BIO);
        assert_eq!(c.accepted, 0.3);
        assert_eq!(c.overflow, 0.0);
        // headroom 0.05 * 20 - 0.9 = 0.1
        let c = clamp_bio_inflow(0.3, 20.0, 0.9, KAPPA_BIO);
        assert!((c.accepted - 0.1).abs() < 1e-15);
        assert!((c.overflow - 0.2).abs() < 1e-15);
    }

    #[test]
    fn negative_headroom_overflows_everything() {
        let c = clamp_bio_inflow(0.3, 10.0, 2.0, KAPPA_BIO);
        assert_eq!(c.accepted, 0.0);
        assert_eq!(c.overflow, 0.3);
    }

    #[test]
    fn pool_totals() {
        let p = CarbonPools::five_pool(1.0, 2.0, 3.0, 0.5, 4.0);
        assert_eq!(p.decomposable_total(), 6.5);
        assert_eq!(p.total_organic(), 10.5);
        assert_eq!(p.particulate(), 3.5);
        assert_eq!(p.get(PoolId::Iom), 4.0);
        let q = CarbonPools::three_pool(30.0, 1.0, 4.0);
        assert_eq!(q.get(PoolId::Amalgam), 30.0);
        assert_eq!(q.total_organic(), 35.0);
    }

    proptest! {
        #[test]
        fn clamp_conserves_exactly(
            u in 0.0f64..1e3,
            total in 0.0f64..1e3,
            bio in 0.0f64..100.0,
        ) {
            let c = clamp_bio_inflow(u, total, bio, KAPPA_BIO);
            prop_assert_eq!(c.accepted + c.overflow, u);
            prop_assert!(c.accepted >= 0.0 && c.overflow >= 0.0);
            // rounding in `u - overflow` is at most one ulp of u
            prop_assert!(c.accepted <= (KAPPA_BIO * total - bio).max(0.0) + 1e-12);
        }

        #[test]
        fn mediation_is_scale_free(
            bio in 0.0f64..10.0,
            total in 0.1f64..100.0,
            scale in 1e-3f64..1e3,
        ) {
            let a = mediation_factor(bio, total, KAPPA_BIO).unwrap();
            let b = mediation_factor(bio * scale, total * scale, KAPPA_BIO).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
