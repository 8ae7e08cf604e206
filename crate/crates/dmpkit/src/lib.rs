//! File formats, configuration and the `dmpkit` command line on top of
//! [`dmpkit_core`].

pub mod cli;
pub mod config;
pub mod formats;

pub use cli::{run, CliError};
pub use config::{Config, ConfigError};
pub use formats::FormatError;
