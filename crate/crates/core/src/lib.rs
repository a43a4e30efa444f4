//! Drift toolkit for regression models on multi-entity KPI time-series:
//! error-series drift detection, local-error explanation over representative
//! feature groups, and dispersion-conditioned forgetting/over-sampling
//! retraining, benchmarked against static, periodic, and triggered schemes.

pub mod dataset;
pub mod detector;
mod error;
pub mod explainer;
pub mod harness;
pub mod metrics;
pub mod mitigator;
pub mod models;
pub mod seeding;
pub mod synth;
pub mod viz;

pub use error::{Error, Result};
