//! File formats and the `jointdx` command line for joint clinical decision
//! prediction. The models, training and metrics live in `jointdx-core`.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod manifest;
pub mod model_io;
pub mod report;

pub use error::{CliError, CliResult};
