//! Configuration-driven pipelines behind the `complens` binary.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod synthetic;

pub use config::RunConfig;
pub use error::CliError;
