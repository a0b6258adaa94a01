//! End-to-end checks of the `proxbundle` binary: exit codes, written report
//! files, the configuration round trip and run-to-run determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use proxbundle_cli::{RunOutcome, RunReport};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proxbundle"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout should be UTF-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr should be UTF-8")
}

/// Small-mesh delamination config so the solver finishes quickly.
fn small_config(dir: &Path, f2: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        format!("problem = \"delamination\"\nf2 = [{f2}]\n\n[mesh]\nnx = 20\nny = 2\n"),
    )
    .expect("write config");
    path.to_str().unwrap().to_owned()
}

#[test]
fn corpus_list_names_every_problem() {
    let out = run(&["corpus", "list"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    for id in ["l1", "l2", "l3", "u1", "u2"] {
        assert!(text.contains(id), "missing {id} in:\n{text}");
    }
}

#[test]
fn corpus_run_converges_on_a_single_problem() {
    let out = run(&["corpus", "run", "u1"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("u1"), "missing id in:\n{text}");
    assert!(text.contains("-3.0000"), "missing final value in:\n{text}");
}

#[test]
fn corpus_run_accepts_parameter_overrides() {
    let out = run(&["corpus", "run", "u1", "--params", "tol_step=1e-8,oracle=downshift"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let out = run(&["corpus", "run", "u1", "--params", "gamma=perhaps"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn unknown_corpus_id_is_a_usage_error() {
    let out = run(&["corpus", "run", "nope"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("nope"));
}

#[test]
fn non_finite_load_is_a_usage_error() {
    let out = run(&["run", "--f2", "inf"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let out = run(&["run", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    let out = run(&["validate", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn validate_without_a_config_checks_the_benchmark() {
    let out = run(&["validate"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("configuration ok"));
}

#[test]
fn run_writes_reports_for_every_load_level() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = small_config(dir.path(), "0.4, 0.8");
    let out_dir = dir.path().join("reports");
    let out = run(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    for name in [
        "f2_0.4_history.csv",
        "f2_0.4_solution.csv",
        "f2_0.4_convergence.svg",
        "f2_0.4_profile.svg",
        "f2_0.4_reactions.svg",
        "f2_0.8_history.csv",
        "f2_0.8_solution.csv",
        "summary.csv",
        "summary.json",
    ] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }

    let json = fs::read_to_string(out_dir.join("summary.json")).expect("summary");
    let report: RunReport = serde_json::from_str(&json).expect("summary should deserialize");
    assert_eq!(report.config.problem, "delamination");
    assert_eq!(report.entries.len(), 2);
    for (entry, f2) in report.entries.iter().zip([0.4, 0.8]) {
        assert_eq!(entry.f2, Some(f2));
        match &entry.outcome {
            RunOutcome::Solved { history, tip_opening } => {
                assert!(history.final_value < 0.0, "energy should drop below zero");
                assert!(tip_opening.is_some());
            }
            RunOutcome::Failed { error } => panic!("level {f2} failed: {error}"),
        }
    }

    let csv = fs::read_to_string(out_dir.join("summary.csv")).expect("summary csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("f2,energy_nmm,energy_nm,tip_opening_mm,serious_steps,stop,converged")
    );
    assert_eq!(lines.clone().count(), 2);
    assert!(lines.all(|l| l.ends_with(",true")), "all rows should converge:\n{csv}");

    let history = fs::read_to_string(out_dir.join("f2_0.4_history.csv")).expect("history");
    assert!(history.starts_with("j,f_start,f_end,step_norm,inner_iterations,tau,rho\n"));
    assert!(history.lines().count() > 2);
}

#[test]
fn summary_json_round_trips_to_identical_histories() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = small_config(dir.path(), "0.6");
    let first = dir.path().join("a");
    let second = dir.path().join("b");

    let out = run(&["run", &cfg, "--out", first.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let echo = first.join("summary.json");
    let out = run(&["run", echo.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    for name in ["f2_0.6_history.csv", "f2_0.6_solution.csv", "summary.csv"] {
        let a = fs::read(first.join(name)).expect(name);
        let b = fs::read(second.join(name)).expect(name);
        assert_eq!(a, b, "{name} differs after the round trip");
    }
}

#[test]
fn corpus_run_writes_per_problem_reports() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = run(&["corpus", "run", "l2", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    for name in ["l2_history.csv", "l2_summary.json", "l2_convergence.svg"] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let json = fs::read_to_string(dir.path().join("l2_summary.json")).expect("summary");
    let report: RunReport = serde_json::from_str(&json).expect("summary should deserialize");
    assert_eq!(report.config.problem, "l2");
    assert_eq!(report.entries[0].reference_value, Some(-0.5));
}

#[test]
fn repeated_runs_produce_identical_reports() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = small_config(dir.path(), "0.6");
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    for out_dir in [&first, &second] {
        let out = run(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    // summary.json embeds wall-clock times, so compare the solver outputs.
    for name in ["f2_0.6_history.csv", "f2_0.6_solution.csv", "summary.csv"] {
        let a = fs::read(first.join(name)).expect(name);
        let b = fs::read(second.join(name)).expect(name);
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn validate_accepts_a_sound_law_and_rejects_a_broken_one() {
    let dir = tempfile::tempdir().expect("tempdir");

    let good = dir.path().join("good.toml");
    fs::write(
        &good,
        "range = [-1.0, 1.0]\n\n\
         [[piece]]\nk = 1.0\nb = 0.0\nc = 0.0\n\n\
         [[piece]]\nk = 0.0\nb = 1.0\nc = -0.25\n",
    )
    .expect("write good law");
    let cfg = dir.path().join("good_cfg.toml");
    fs::write(
        &cfg,
        format!("problem = \"delamination\"\nlaw = \"{}\"\n", good.display()),
    )
    .expect("write config");
    let out = run(&["validate", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("ok: law"));

    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "range = [-1.0, 1.0]\n\n\
         [[piece]]\nk = 0.0\nb = 1.0\nc = 0.0\n\n\
         [[piece]]\nk = 0.0\nb = 2.0\nc = 0.0\n",
    )
    .expect("write bad law");
    let cfg = dir.path().join("bad_cfg.toml");
    fs::write(
        &cfg,
        format!("problem = \"delamination\"\nlaw = \"{}\"\n", bad.display()),
    )
    .expect("write config");
    let out = run(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("violation: law"));
}

#[test]
fn run_accepts_a_custom_law_file() {
    let dir = tempfile::tempdir().expect("tempdir");
    let law = dir.path().join("law.toml");
    let benchmark = Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .join("proxbundle/fixtures/adhesive_law.toml");
    fs::copy(&benchmark, &law).expect("copy fixture");

    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        format!(
            "problem = \"delamination\"\nf2 = [0.4]\nlaw = \"{}\"\n\n[mesh]\nnx = 20\nny = 2\n",
            law.display()
        ),
    )
    .expect("write config");
    let out = run(&["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("energy"));
}

#[test]
fn zero_load_relaxes_to_the_undeformed_state() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = small_config(dir.path(), "0.0");
    let out_dir = dir.path().join("reports");
    let out = run(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let json = fs::read_to_string(out_dir.join("summary.json")).expect("summary");
    let report: RunReport = serde_json::from_str(&json).expect("summary should deserialize");
    match &report.entries[0].outcome {
        RunOutcome::Solved { history, .. } => {
            assert!(
                history.final_value.abs() <= 1e-9,
                "unloaded energy should vanish, got {}",
                history.final_value
            );
        }
        RunOutcome::Failed { error } => panic!("zero load failed: {error}"),
    }
}
