//! File formats, reports and the `turf` command line on top of `turf-core`.

pub mod cli;
pub mod error;
pub mod fixture;
pub mod io;
pub mod manifest;
pub mod model_file;
pub mod oracle;
pub mod reports;
pub mod winograd_check;

pub use error::{CliError, Result};
