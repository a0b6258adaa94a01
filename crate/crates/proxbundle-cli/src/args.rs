use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Bundle solver for nonsmooth nonconvex programs and a plane-stress
/// delamination benchmark.
///
/// Exit codes: 0 on success, 2 on configuration or input errors, 3 on solver
/// failure, including runs that end without meeting the convergence test.
#[derive(Debug, Parser)]
#[command(name = "proxbundle", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a configured problem and write its artifacts.
    Run(RunArgs),
    /// Inspect or solve the built-in nonsmooth test instances.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Check a configuration without solving anything.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration, or the JSON record of an earlier run to repeat
    /// it; the benchmark load sweep when omitted.
    pub config: Option<PathBuf>,
    /// Load levels in N/mm^2, comma separated; overrides the configuration.
    #[arg(long, value_delimiter = ',')]
    pub f2: Option<Vec<f64>>,
    /// Solver parameter overrides, comma separated k=v pairs
    /// (e.g. gamma=0.05,k_max=80,oracle=modified).
    #[arg(long, value_delimiter = ',')]
    pub params: Vec<String>,
    /// Artifact directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for start sampling; overrides the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum CorpusAction {
    /// Print the instance table.
    List,
    /// Solve instances and compare against their frozen optima.
    Run(CorpusRunArgs),
}

#[derive(Debug, Args)]
pub struct CorpusRunArgs {
    /// Instance id, or "all".
    #[arg(default_value = "all")]
    pub id: String,
    /// Solver parameter overrides, comma separated k=v pairs.
    #[arg(long, value_delimiter = ',')]
    pub params: Vec<String>,
    /// Directory for per-instance reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Configuration to check; the benchmark defaults when omitted.
    pub config: Option<PathBuf>,
}
