//! Config-driven front end for `mastereq-core`: spectra, trajectories,
//! the finite rank-one model and the verification suite.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod error;
pub mod numfmt;
pub mod output;
pub mod verify;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
