//! Experiment driver: configuration overrides, pipelines and checksummed
//! CSV output for the `choicelab` command.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod stats;

pub use error::{HarnessError, Result};
