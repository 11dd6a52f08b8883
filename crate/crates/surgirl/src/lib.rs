//! Configuration, checkpoints, metrics and experiment orchestration around
//! `surgirl-core`.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod metrics;
pub mod run;

pub use error::{HarnessError, Result};
