//! Library half of the `proxbundle` binary: argument types, configuration,
//! command implementations and report writers, kept here so integration tests
//! can call them directly.

pub mod args;
pub mod commands;
pub mod config;
pub mod report;

pub use args::{Cli, Command};
pub use commands::{dispatch, CliError};
pub use config::{apply_param_overrides, load_config, MeshConfig, RunConfig};
pub use report::{
    history_csv, line_plot_svg, solution_csv, summary_csv, RunEntry, RunOutcome, RunReport,
};
