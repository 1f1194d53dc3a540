//! Library for measuring exposure diversification in temporal weighted
//! networks: edge-list ingestion, the observable/absolute/relative
//! transform pipeline with entropy diagnostics, a Dirichlet latent-variable
//! model with drift, sender and receiver effects, an adaptive
//! Metropolis-within-Gibbs sampler, synthetic generators for validation,
//! and posterior summaries.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod network;
mod par;
pub mod posterior;
pub mod sampler;
pub mod synthetic;
pub mod transform;

pub use error::{Error, Result};
