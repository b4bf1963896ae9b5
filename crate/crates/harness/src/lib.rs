//! File formats, dataset adapters, the experiment runner and the command
//! line front end built on `readcomp-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod squad;

pub use error::{HarnessError, Result};
