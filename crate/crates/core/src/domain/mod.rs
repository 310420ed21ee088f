//! Domain types shared by every other module.

pub mod data;
pub mod params;
pub mod pools;
pub mod stream;
pub mod variant;

pub use data::{Channel, Dataset, ManagementSchedule, Treatment};
pub use params::{ParamKey, ParamKind, ParameterVector};
pub use pools::{
    clamp_bio_inflow, decay_mediation_factor, mediation_factor, BioInflow, CarbonPools, FieldState, PlantState,
    PoolId, StateVector, DELTA_T, KAPPA_BIO, MAX_PLANT_DIM,
};
pub use stream::{RandomStream, StreamLayout};
pub use variant::ModelVariant;
