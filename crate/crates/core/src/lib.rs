//! Tail-aware probabilistic forecasting: generalized Pareto fitting, loss
//! modifiers that reweight hard examples, AR and recurrent forecasters, and
//! tail metrics for the resulting error distributions.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gpd;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod study;
pub mod trainer;

pub use error::{Error, Result};
