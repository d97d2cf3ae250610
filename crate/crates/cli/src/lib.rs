//! File formats and command implementations behind the `mrerank` binary.

pub mod commands;
pub mod error;
pub mod features;
pub mod output;
pub mod run;
pub mod settings;
pub mod truth;

pub use error::{CliError, FormatError, EXIT_INPUT, EXIT_NONCONVERGED};
