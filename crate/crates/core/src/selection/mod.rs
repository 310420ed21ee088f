//! Predictive model comparison: WAIC from the per-step likelihood terms
//! recorded with every draw, and exact leave-future-out cross-validation.

pub mod lfo;
pub mod waic;

pub use lfo::{lfo_cv, ElpdResult, ElpdStep, LfoConfig};
pub use waic::{waic, waic_from_increments, WaicReport, WaicResult};
