//! Bayesian state-space inference for soil organic carbon models.
//!
//! Three-pool and five-pool carbon models, each in a regular and a
//! microbially mediated (BIO-K) form, are fitted with a correlated
//! pseudo-marginal Metropolis-Hastings sampler whose likelihood comes from a
//! Rao-Blackwellised particle filter. Models are compared by exact
//! leave-future-out cross-validation and WAIC.

pub mod cli;
pub mod cpm;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod particle;
pub mod reference;
pub mod selection;
pub mod soc;

pub use error::{Error, Result};
