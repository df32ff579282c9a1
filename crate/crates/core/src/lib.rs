//! Federated-learning simulation and Shapley-value contribution estimation.
//!
//! A federation run ([`fl::run_federation`]) records every participant's
//! per-round update in a [`fl::GradientLog`]. Estimators in [`estimators`]
//! value participants from that log alone, by reconstructing sub-models for
//! coalitions instead of retraining them.

pub mod data;
pub mod estimators;
pub mod experiment;
pub mod error;
pub mod fl;
pub mod game;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod timing;

pub use error::{Error, Result};
