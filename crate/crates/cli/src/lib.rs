//! Command-line front end for `quasispec`: problem files, catalog CSVs and
//! plain-text reports.

pub mod catalog_io;
pub mod config;
pub mod report;
pub mod run;

pub use catalog_io::{read_catalog, write_catalog};
pub use config::{parse_config, ConfigError, ProblemConfig};
pub use run::{run, CliError, Command, ExitStatus, Outcome, RunOptions};
