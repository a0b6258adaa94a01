//! Run configuration: what to solve, from which files, with which parameter
//! overrides. The resolved configuration is echoed into the JSON record so a
//! run can be repeated from its own artifacts.

use crate::commands::CliError;
use crate::report::RunReport;
use proxbundle::delamination::{BoundaryLayout, ElasticityParams};
use proxbundle::driver::DriverParams;
use proxbundle::oracle::{DownshiftCoefficient, OracleVariant};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Structured mesh dimensions; defaults are the benchmark strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Strip length in mm.
    pub length: f64,
    /// Strip height in mm.
    pub height: f64,
    /// Subdivisions along the strip.
    pub nx: usize,
    /// Subdivisions across the strip.
    pub ny: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { length: 100.0, height: 10.0, nx: 40, ny: 4 }
    }
}

/// One run, as read from a TOML file or echoed in a JSON record. Every field
/// has a default, so an empty file selects the benchmark sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// "delamination" or a corpus instance id.
    pub problem: String,
    /// Load levels in N/mm^2, one solve each; delamination only.
    pub f2: Vec<f64>,
    /// Adhesive law TOML path; the bundled benchmark law when absent.
    pub law: Option<PathBuf>,
    pub mesh: MeshConfig,
    /// Boundary roles; the benchmark layout (left 80% glued, the rest and the
    /// right edge clamped) when absent.
    pub layout: Option<BoundaryLayout>,
    pub elasticity: ElasticityParams,
    /// Solver parameters; sized to the problem when absent.
    pub params: Option<DriverParams>,
    /// Radius of a uniform start perturbation, clipped to the instance box;
    /// corpus instances only.
    pub jitter: f64,
    /// Seed for the start perturbation.
    pub seed: u64,
    /// Artifact directory; nothing is written when absent.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: "delamination".into(),
            f2: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            law: None,
            mesh: MeshConfig::default(),
            layout: None,
            elasticity: ElasticityParams::default(),
            params: None,
            jitter: 0.0,
            seed: 0,
            out: None,
        }
    }
}

/// Reads a configuration. A `.json` path is treated as the record of an
/// earlier run and yields its config echo; anything else parses as TOML.
/// `None` yields the benchmark defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = crate::commands::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let report: RunReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("failed to parse {}: {e}", path.display())))?;
        Ok(report.config)
    } else {
        toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("failed to parse {}: {e}", path.display())))
    }
}

/// Applies `k=v` override pairs from the command line onto solver parameters.
pub fn apply_param_overrides(
    params: &mut DriverParams,
    pairs: &[String],
) -> Result<(), CliError> {
    for pair in pairs {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(CliError::Config(format!(
                "override '{pair}' is not of the form key=value"
            )));
        };
        match key {
            "gamma" => params.gamma = parse_f64(key, value)?,
            "gamma_relax" => params.gamma_relax = parse_f64(key, value)?,
            "gamma_tilde" => params.gamma_tilde = parse_f64(key, value)?,
            "curvature_bound" => params.curvature_bound = parse_f64(key, value)?,
            "memory_cap" => params.memory_cap = parse_f64(key, value)?,
            "tol_step" => params.tol_step = parse_f64(key, value)?,
            "tol_value" => params.tol_value = parse_f64(key, value)?,
            "k_max" => params.k_max = parse_usize(key, value)?,
            "j_max" => params.j_max = parse_usize(key, value)?,
            "plane_budget" => params.plane_budget = parse_usize(key, value)?,
            "oracle" => {
                params.oracle.variant = match value {
                    "standard" => OracleVariant::Standard,
                    "downshift" => OracleVariant::Downshift,
                    "modified" => OracleVariant::Modified,
                    _ => {
                        return Err(CliError::Config(format!(
                            "oracle must be standard, downshift or modified, got '{value}'"
                        )))
                    }
                }
            }
            "downshift" => {
                params.oracle.downshift = if value == "scaled" {
                    DownshiftCoefficient::Scaled
                } else {
                    DownshiftCoefficient::Fixed(parse_f64(key, value)?)
                }
            }
            _ => return Err(CliError::Config(format!("unknown parameter '{key}'"))),
        }
    }
    Ok(())
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("parameter '{key}' needs a number, got '{value}'")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("parameter '{key}' needs a count, got '{value}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_the_benchmark_sweep() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.problem, "delamination");
        assert_eq!(cfg.f2, vec![0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(cfg.mesh, MeshConfig::default());
        assert!(cfg.params.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("nodes = 3\n").is_err());
    }

    #[test]
    fn overrides_update_fields_and_reject_junk() {
        let mut params = DriverParams::default();
        apply_param_overrides(
            &mut params,
            &["gamma=0.02".into(), "k_max=9".into(), "oracle=standard".into()],
        )
        .unwrap();
        assert_eq!(params.gamma, 0.02);
        assert_eq!(params.k_max, 9);
        assert_eq!(params.oracle.variant, OracleVariant::Standard);

        assert!(apply_param_overrides(&mut params, &["gamma".into()]).is_err());
        assert!(apply_param_overrides(&mut params, &["nope=1".into()]).is_err());
        assert!(apply_param_overrides(&mut params, &["gamma=abc".into()]).is_err());
    }
}
