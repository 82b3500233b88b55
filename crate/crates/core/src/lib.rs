//! Availability forecasting from connectivity traces.
//!
//! The crate turns session logs into hourly availability matrices, derives
//! five periodic features per (user, slot), fits a Bayesian logistic
//! regression with a Laplace approximation, and feeds the resulting
//! probabilistic forecasts into three placement / pre-loading simulators.

pub mod bayes;
pub mod cluster;
pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod prediction;
pub mod seeds;
pub mod sim_dht;
pub mod sim_f2f;
pub mod sim_newsfeed;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
