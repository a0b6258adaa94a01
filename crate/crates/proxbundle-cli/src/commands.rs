//! Command implementations. Each returns whether the work converged, so the
//! binary can map outcomes onto exit codes.

use crate::args::{Cli, Command, CorpusAction, CorpusRunArgs, RunArgs, ValidateArgs};
use crate::config::{apply_param_overrides, load_config, RunConfig};
use crate::report::{
    convergence_svg, history_csv, opening_profile_svg, reaction_profile_svg, solution_csv,
    summary_csv, RunEntry, RunOutcome, RunReport,
};
use nalgebra::DVector;
use proxbundle::delamination::{AdhesiveLaw, DelaminationModel, LawError, Mesh};
use proxbundle::driver::{self, DriverError, DriverParams, OuterRecord, RunHistory};
use proxbundle::problems::{corpus, corpus_entry, CorpusEntry};
use proxbundle::qp::Polyhedron;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("law file rejected: {0}")]
    Law(#[from] LawError),
    #[error("solver failed: {0}")]
    Solver(#[from] DriverError),
}

impl CliError {
    /// 3 for solver breakdowns, 2 for anything wrong with the input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 3,
            _ => 2,
        }
    }
}

fn config_err<T: std::fmt::Display>(msg: T) -> CliError {
    CliError::Config(msg.to_string())
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Write { path, source })
}

fn prepare_out_dir(out: &Option<PathBuf>) -> Result<Option<&Path>, CliError> {
    match out {
        None => Ok(None),
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
                path: dir.clone(),
                source,
            })?;
            Ok(Some(dir.as_path()))
        }
    }
}

/// Runs one command; `Ok(true)` means everything converged (exit 0),
/// `Ok(false)` maps to exit 3.
pub fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run(args) => run_command(&args),
        Command::Corpus { action } => match action {
            CorpusAction::List => {
                list_corpus();
                Ok(true)
            }
            CorpusAction::Run(args) => run_corpus(&args),
        },
        Command::Validate(args) => validate(&args),
    }
}

fn run_command(args: &RunArgs) -> Result<bool, CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(f2) = &args.f2 {
        cfg.f2 = f2.clone();
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if cfg.problem == "delamination" {
        run_delamination(cfg, &args.params)
    } else {
        run_corpus_config(cfg, &args.params)
    }
}

/// Base solver parameters for the config, before command line overrides.
/// `None` in the config means "sized to the problem", which both branches of
/// the round trip re-derive identically.
fn resolve_params(
    cfg: &RunConfig,
    overrides: &[String],
    suggested: impl FnOnce() -> DriverParams,
) -> Result<(DriverParams, bool), CliError> {
    let explicit = cfg.params.is_some() || !overrides.is_empty();
    let mut params = cfg.params.clone().unwrap_or_else(suggested);
    apply_param_overrides(&mut params, overrides)?;
    params.validate().map_err(config_err)?;
    Ok((params, explicit))
}

fn build_model(cfg: &RunConfig) -> Result<DelaminationModel, CliError> {
    let law = match &cfg.law {
        Some(path) => AdhesiveLaw::from_toml_str(&read_to_string(path)?)?,
        None => AdhesiveLaw::benchmark(),
    };
    let mesh = Mesh::build(
        cfg.mesh.length,
        cfg.mesh.height,
        cfg.mesh.nx,
        cfg.mesh.ny,
        cfg.layout.unwrap_or_default(),
    )
    .map_err(config_err)?;
    DelaminationModel::build(mesh, cfg.elasticity, law).map_err(config_err)
}

fn progress_header() {
    println!("{:>4} {:>16} {:>12} {:>6} {:>12}", "j", "objective", "step", "inner", "tau");
}

fn progress_row(r: &OuterRecord) {
    println!(
        "{:>4} {:>16.8} {:>12.4e} {:>6} {:>12.4e}",
        r.j, r.f_end, r.step_norm, r.inner_iterations, r.tau_final
    );
}

fn print_stop(history: &RunHistory) {
    println!(
        "stop: {:?} after {} serious steps, certificate {:.3e}",
        history.stop_reason,
        history.serious_steps(),
        history.certificate_residual
    );
}

fn run_delamination(cfg: RunConfig, overrides: &[String]) -> Result<bool, CliError> {
    if cfg.f2.is_empty() {
        return Err(config_err("f2 list is empty: nothing to solve"));
    }
    if let Some(bad) = cfg.f2.iter().find(|v| !v.is_finite()) {
        return Err(config_err(format!("load level {bad} is not finite")));
    }
    let model = build_model(&cfg)?;
    let (params, explicit) = resolve_params(&cfg, overrides, || model.suggested_driver_params())?;
    let mut echo = cfg;
    if explicit {
        echo.params = Some(params.clone());
    }

    let constraints = model.contact_constraints();
    let start = DVector::zeros(model.dimension());
    println!(
        "delamination: {} dofs, {} contact rows, {} load level(s)",
        model.dimension(),
        constraints.rows(),
        echo.f2.len()
    );

    let out_dir = prepare_out_dir(&echo.out)?;
    let mut entries = Vec::new();
    let mut all_converged = true;

    for &f2 in &echo.f2 {
        println!("-- F2 = {f2} N/mm^2");
        progress_header();
        let energy = model.energy(f2);
        let clock = Instant::now();
        let outcome = driver::solve_observed(&energy, &constraints, &start, &params, progress_row);
        let wall_seconds = clock.elapsed().as_secs_f64();
        let label = format!("f2_{f2}");

        let entry = match outcome {
            Ok(history) => {
                let v = DVector::from_column_slice(&history.final_point);
                let tip_opening = model.tip_dof().map(|d| v[d]);
                print_stop(&history);
                println!(
                    "energy {:.6} N·mm ({:.4} N·m), tip opening {} mm",
                    history.final_value,
                    history.final_value * 1e-3,
                    tip_opening.map_or_else(|| "n/a".into(), |t| format!("{t:.5}"))
                );
                all_converged &= history.is_converged();
                if let Some(dir) = out_dir {
                    write_file(dir, &format!("{label}_history.csv"), &history_csv(&history))?;
                    write_file(
                        dir,
                        &format!("{label}_solution.csv"),
                        &solution_csv(&model, &v, f2),
                    )?;
                    write_file(
                        dir,
                        &format!("{label}_convergence.svg"),
                        &convergence_svg(&history),
                    )?;
                    write_file(
                        dir,
                        &format!("{label}_profile.svg"),
                        &opening_profile_svg(&model, &v),
                    )?;
                    write_file(
                        dir,
                        &format!("{label}_reactions.svg"),
                        &reaction_profile_svg(&model, &v, f2),
                    )?;
                }
                RunEntry {
                    label,
                    f2: Some(f2),
                    reference_value: None,
                    wall_seconds,
                    outcome: RunOutcome::Solved { history, tip_opening },
                }
            }
            Err(err) => {
                // Record the failure and keep going; artifacts of the other
                // load levels stay on disk.
                eprintln!("F2 = {f2} failed: {err}");
                all_converged = false;
                RunEntry {
                    label,
                    f2: Some(f2),
                    reference_value: None,
                    wall_seconds,
                    outcome: RunOutcome::Failed { error: err.to_string() },
                }
            }
        };
        entries.push(entry);
    }

    if entries.len() > 1 {
        println!("-- sweep summary");
        print!("{}", summary_csv(&entries));
    }
    if let Some(dir) = out_dir {
        write_file(dir, "summary.csv", &summary_csv(&entries))?;
        let report = RunReport { config: echo.clone(), entries };
        write_file(
            dir,
            "summary.json",
            &serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
        println!("reports written to {}", dir.display());
    }
    Ok(all_converged)
}

fn run_corpus_config(cfg: RunConfig, overrides: &[String]) -> Result<bool, CliError> {
    let entry = corpus_entry(&cfg.problem).map_err(config_err)?;
    let (params, explicit) = resolve_params(&cfg, overrides, DriverParams::default)?;
    let mut echo = cfg;
    if explicit {
        echo.params = Some(params.clone());
    }

    println!("instance {}: {}", entry.id, entry.description);
    progress_header();
    let clock = Instant::now();
    let (history, _start) =
        solve_corpus_instance(entry, &params, echo.jitter, echo.seed, progress_row)?;
    let wall_seconds = clock.elapsed().as_secs_f64();
    print_stop(&history);
    println!(
        "final {:.8}, reference {:.8}, gap {:.2e}",
        history.final_value,
        entry.optimum_value,
        history.final_value - entry.optimum_value
    );

    let converged = history.is_converged();
    if let Some(dir) = prepare_out_dir(&echo.out)? {
        let run_entry = RunEntry {
            label: entry.id.clone(),
            f2: None,
            reference_value: Some(entry.optimum_value),
            wall_seconds,
            outcome: RunOutcome::Solved { history: history.clone(), tip_opening: None },
        };
        write_file(dir, &format!("{}_history.csv", entry.id), &history_csv(&history))?;
        write_file(dir, &format!("{}_convergence.svg", entry.id), &convergence_svg(&history))?;
        let report = RunReport { config: echo.clone(), entries: vec![run_entry] };
        write_file(
            dir,
            "summary.json",
            &serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
        println!("reports written to {}", dir.display());
    }
    Ok(converged)
}

fn list_corpus() {
    println!("{:<6} {:>3} {:>14} description", "id", "dim", "optimum");
    for e in corpus() {
        println!(
            "{:<6} {:>3} {:>14.8} {}",
            e.id,
            e.problem.bounds().dimension(),
            e.optimum_value,
            e.description
        );
    }
}

fn jittered_start(entry: &CorpusEntry, jitter: f64, seed: u64) -> DVector<f64> {
    let bounds = entry.problem.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_iterator(
        entry.start.len(),
        entry.start.iter().enumerate().map(|(i, &s)| {
            let x = if jitter > 0.0 { s + rng.random_range(-jitter..jitter) } else { s };
            x.clamp(bounds.lower[i], bounds.upper[i])
        }),
    )
}

fn solve_corpus_instance(
    entry: &CorpusEntry,
    params: &DriverParams,
    jitter: f64,
    seed: u64,
    observer: impl FnMut(&OuterRecord),
) -> Result<(RunHistory, DVector<f64>), CliError> {
    if jitter < 0.0 || jitter.is_nan() {
        return Err(config_err("jitter must be nonnegative"));
    }
    let constraints = Polyhedron::from_box(entry.problem.bounds());
    let start = jittered_start(entry, jitter, seed);
    let history =
        driver::solve_observed(entry.problem.as_problem(), &constraints, &start, params, observer)?;
    Ok((history, start))
}

fn run_corpus(args: &CorpusRunArgs) -> Result<bool, CliError> {
    let entries: Vec<&CorpusEntry> = if args.id == "all" {
        corpus().iter().collect()
    } else {
        vec![corpus_entry(&args.id).map_err(config_err)?]
    };
    let mut params = DriverParams::default();
    apply_param_overrides(&mut params, &args.params)?;
    params.validate().map_err(config_err)?;
    let out_dir = prepare_out_dir(&args.out)?;

    let mut all_converged = true;
    println!("{:<6} {:>14} {:>14} {:>10} {:>8} stop", "id", "final", "reference", "gap", "serious");
    for entry in entries {
        let clock = Instant::now();
        let (history, _start) = solve_corpus_instance(entry, &params, 0.0, 0, |_| {})?;
        let wall_seconds = clock.elapsed().as_secs_f64();
        all_converged &= history.is_converged();
        println!(
            "{:<6} {:>14.8} {:>14.8} {:>10.2e} {:>8} {:?}",
            entry.id,
            history.final_value,
            entry.optimum_value,
            history.final_value - entry.optimum_value,
            history.serious_steps(),
            history.stop_reason
        );
        if let Some(dir) = out_dir {
            let echo = RunConfig {
                problem: entry.id.clone(),
                f2: Vec::new(),
                params: if args.params.is_empty() { None } else { Some(params.clone()) },
                out: args.out.clone(),
                ..RunConfig::default()
            };
            let run_entry = RunEntry {
                label: entry.id.clone(),
                f2: None,
                reference_value: Some(entry.optimum_value),
                wall_seconds,
                outcome: RunOutcome::Solved { history: history.clone(), tip_opening: None },
            };
            write_file(dir, &format!("{}_history.csv", entry.id), &history_csv(&history))?;
            write_file(
                dir,
                &format!("{}_summary.json", entry.id),
                &serde_json::to_string_pretty(&RunReport { config: echo, entries: vec![run_entry] })
                    .expect("report serializes"),
            )?;
            write_file(dir, &format!("{}_convergence.svg", entry.id), &convergence_svg(&history))?;
        }
    }
    Ok(all_converged)
}

/// Checks a configuration without solving: parameter ordering, law and mesh
/// invariants, and feasibility of the start point. Every violation is
/// reported; any violation fails the command.
fn validate(args: &ValidateArgs) -> Result<bool, CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let mut violations = 0usize;
    let mut fail = |msg: String| {
        println!("violation: {msg}");
        violations += 1;
    };

    let is_delamination = cfg.problem == "delamination";
    let corpus_hit = corpus_entry(&cfg.problem).ok();
    if !is_delamination && corpus_hit.is_none() {
        fail(format!(
            "problem '{}' is neither 'delamination' nor a corpus instance id",
            cfg.problem
        ));
    } else {
        println!("ok: problem '{}'", cfg.problem);
    }

    if is_delamination {
        if cfg.f2.is_empty() {
            fail("f2 list is empty: a delamination run needs at least one load level".into());
        } else if let Some(bad) = cfg.f2.iter().find(|v| !v.is_finite()) {
            fail(format!("load level {bad} is not finite"));
        } else {
            println!("ok: {} load level(s)", cfg.f2.len());
        }

        let law = match &cfg.law {
            Some(path) => read_to_string(path).and_then(|t| Ok(AdhesiveLaw::from_toml_str(&t)?)),
            None => Ok(AdhesiveLaw::benchmark()),
        };
        let law = match law {
            Ok(law) => {
                let (lo, hi) = law.range();
                let deepest = (0..=2000)
                    .map(|s| law.value(lo + (hi - lo) * s as f64 / 2000.0))
                    .fold(f64::INFINITY, f64::min);
                println!(
                    "ok: law with {} pieces on [{lo}, {hi}], deepest sampled value {deepest:.4}",
                    law.pieces().len()
                );
                Some(law)
            }
            Err(e) => {
                fail(format!("law: {e}"));
                None
            }
        };

        let mesh = Mesh::build(
            cfg.mesh.length,
            cfg.mesh.height,
            cfg.mesh.nx,
            cfg.mesh.ny,
            cfg.layout.unwrap_or_default(),
        );
        let mesh = match mesh {
            Ok(mesh) => {
                println!(
                    "ok: mesh with {} nodes, {} triangles, {} contact nodes",
                    mesh.nodes().len(),
                    mesh.triangles().len(),
                    mesh.contact_nodes().len()
                );
                Some(mesh)
            }
            Err(e) => {
                fail(format!("mesh: {e}"));
                None
            }
        };

        if let (Some(law), Some(mesh)) = (law, mesh) {
            match DelaminationModel::build(mesh, cfg.elasticity, law) {
                Ok(model) => {
                    let constraints = model.contact_constraints();
                    let start = DVector::zeros(model.dimension());
                    if constraints.is_satisfied(&start, 1e-9) {
                        println!(
                            "ok: zero start satisfies all {} contact rows",
                            constraints.rows()
                        );
                    } else {
                        fail("zero start violates the contact constraints".into());
                    }
                    let params =
                        cfg.params.clone().unwrap_or_else(|| model.suggested_driver_params());
                    report_params(&params, &mut fail);
                }
                Err(e) => fail(format!("model assembly: {e}")),
            }
        }
    } else if let Some(entry) = corpus_hit {
        let bounds = entry.problem.bounds();
        if bounds.contains(&entry.start) {
            println!("ok: start point inside the instance box");
        } else {
            fail("instance start lies outside its box".into());
        }
        if cfg.jitter < 0.0 {
            fail("jitter must be nonnegative".into());
        }
        report_params(&cfg.params.clone().unwrap_or_default(), &mut fail);
    }

    if violations == 0 {
        println!("configuration ok");
        Ok(true)
    } else {
        Err(config_err(format!("{violations} validation failure(s)")))
    }
}

fn report_params(params: &DriverParams, fail: &mut impl FnMut(String)) {
    match params.validate() {
        Ok(()) => println!(
            "ok: parameters (gamma {} < gamma_relax {} < 1, gamma < gamma_tilde {} < 1)",
            params.gamma, params.gamma_relax, params.gamma_tilde
        ),
        Err(e) => fail(format!("parameters: {e}")),
    }
}
