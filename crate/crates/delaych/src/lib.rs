//! Configuration, file formats and the `solve` / `study` / `verify` commands
//! on top of `delaych-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use commands::{cmd_solve, cmd_study, cmd_verify, SolveOutcome, StudyOutcome, VerifyOutcome};
pub use config::{load_config, parse_config, RunConfig};
pub use error::{CliError, Result};
