//! Customer segmentation from preference graphs.
//!
//! The library fits a single pooled preference model to all observations,
//! scores each customer by the normalized negative log-likelihood of their
//! observations under that model (the projection score), and clusters the
//! scores. A latent-class EM benchmark, synthetic generators, and an
//! experiment harness round out the toolkit.
//!
//! Module map:
//! - [`corpus`]: preference-graph loading, validation, indexed access
//! - [`pooled`]: pooled model families and estimators
//! - [`projection`]: projection scores (degree and entropy normalized)
//! - [`factorize`]: ALS factorization of incomplete score matrices, spectral projection
//! - [`cluster`]: k-means, density-based segment-count estimation, label alignment
//! - [`classify`]: nearest-center classifiers and separation constants
//! - [`lcem`]: latent-class Bernoulli mixture fit by MAP-EM
//! - [`synthgen`]: synthetic population generators
//! - [`harness`]: experiment drivers and JSON reports

pub mod classify;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod factorize;
pub mod harness;
pub mod lcem;
pub mod pooled;
pub mod projection;
pub mod stream;
pub mod synthgen;

pub use error::{Error, Result};
