//! Core library for fiducial inference in normal linear mixed models with
//! interval-censored responses: model specification, the polyhedral
//! geometry underneath the sampler, the sequential Monte Carlo engine, and
//! interval summaries of the resulting particle cloud.

pub mod fmt;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod smc;
