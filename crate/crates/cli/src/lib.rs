//! Command-line pipeline driver and read-only HTTP service for
//! `turnover-core`.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod server;

pub use config::RunConfig;
pub use error::CliError;
pub use pipeline::{cmd_generate, cmd_simulate, cmd_train, ModelArtifact};
