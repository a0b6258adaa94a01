//! Plain-text artifacts of a solver run: CSV tables, a JSON record and
//! small SVG plots. All writers are deterministic so repeated runs produce
//! byte-identical files.

use crate::config::RunConfig;
use nalgebra::DVector;
use proxbundle::delamination::DelaminationModel;
use proxbundle::driver::RunHistory;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Everything worth keeping from one invocation, round-trippable through
/// JSON: the configuration echo plus one entry per solve. Feeding the record
/// back to `run` repeats the invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub entries: Vec<RunEntry>,
}

/// One solve of a sweep or corpus run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEntry {
    /// Artifact file prefix: `f2_<level>` or the instance id.
    pub label: String,
    /// Load level for delamination entries.
    pub f2: Option<f64>,
    /// Frozen reference value for corpus entries.
    pub reference_value: Option<f64>,
    pub wall_seconds: f64,
    pub outcome: RunOutcome,
}

/// A failed solve keeps its error in the record; artifacts of the other
/// entries are retained.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunOutcome {
    Solved {
        history: RunHistory,
        /// Vertical opening at the strip tip, delamination entries only.
        tip_opening: Option<f64>,
    },
    Failed {
        error: String,
    },
}

impl RunEntry {
    pub fn is_converged(&self) -> bool {
        match &self.outcome {
            RunOutcome::Solved { history, .. } => history.is_converged(),
            RunOutcome::Failed { .. } => false,
        }
    }
}

fn push_float(line: &mut String, value: f64) {
    // One stable format for every numeric cell.
    let _ = write!(line, ",{value:.8e}");
}

/// One row per outer iteration: the serious step trace.
pub fn history_csv(history: &RunHistory) -> String {
    let mut out = String::from("j,f_start,f_end,step_norm,inner_iterations,tau,rho\n");
    for r in &history.records {
        let mut line = format!("{}", r.j);
        push_float(&mut line, r.f_start);
        push_float(&mut line, r.f_end);
        push_float(&mut line, r.step_norm);
        let _ = write!(line, ",{}", r.inner_iterations);
        push_float(&mut line, r.tau_final);
        match r.rho_final {
            Some(rho) => push_float(&mut line, rho),
            None => line.push(','),
        }
        line.push('\n');
        out.push_str(&line);
    }
    out
}

/// Sweep overview, one row per load level.
pub fn summary_csv(entries: &[RunEntry]) -> String {
    let mut out = String::from(
        "f2,energy_nmm,energy_nm,tip_opening_mm,serious_steps,stop,converged\n",
    );
    for entry in entries {
        let Some(f2) = entry.f2 else { continue };
        let mut line = format!("{f2}");
        match &entry.outcome {
            RunOutcome::Solved { history, tip_opening } => {
                push_float(&mut line, history.final_value);
                push_float(&mut line, history.final_value * 1e-3);
                match tip_opening {
                    Some(tip) => push_float(&mut line, *tip),
                    None => line.push(','),
                }
                let _ = write!(
                    line,
                    ",{},{:?},{}",
                    history.serious_steps(),
                    history.stop_reason,
                    history.is_converged()
                );
            }
            RunOutcome::Failed { .. } => line.push_str(",,,,,failed,false"),
        }
        line.push('\n');
        out.push_str(&line);
    }
    out
}

/// Per-node solution table for a delamination run.
pub fn solution_csv(model: &DelaminationModel, v: &DVector<f64>, f2: f64) -> String {
    let full = model.expand(v).expect("displacement matches the model");
    let reactions = model.reactions(v, f2).expect("displacement matches the model");
    let mut traction = vec![None; model.mesh().nodes().len()];
    for r in &reactions {
        traction[r.node] = Some(r.traction_from_balance);
    }
    let mut out = String::from("node,x,y,u1,u2,contact,reaction\n");
    for (node, p) in model.mesh().nodes().iter().enumerate() {
        let mut line = format!("{node},{:.6},{:.6}", p[0], p[1]);
        let _ = write!(line, ",{:.8e},{:.8e}", full[2 * node], full[2 * node + 1]);
        match traction[node] {
            Some(t) => {
                line.push_str(",1");
                push_float(&mut line, t);
            }
            None => line.push_str(",0,"),
        }
        line.push('\n');
        out.push_str(&line);
    }
    out
}

/// Line plot of `points` with linear axes. Hand-rolled: the output stays
/// stable across dependency updates and diffs cleanly.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const ML: f64 = 78.0;
    const MR: f64 = 20.0;
    const MT: f64 = 36.0;
    const MB: f64 = 52.0;

    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if points.is_empty() {
        x_lo = 0.0;
        x_hi = 1.0;
        y_lo = 0.0;
        y_hi = 1.0;
    }
    // Pad degenerate spans so the mapping below stays finite.
    if x_hi - x_lo < 1e-300 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if y_hi - y_lo < 1e-300 {
        let pad = 0.5 * (1.0 + y_lo.abs());
        y_lo -= pad;
        y_hi += pad;
    }
    let sx = |x: f64| ML + (x - x_lo) / (x_hi - x_lo) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y_lo) / (y_hi - y_lo) * (H - MT - MB);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        (ML + W - MR) / 2.0
    );
    // Axes box and four ticks per axis.
    let _ = writeln!(
        svg,
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{:.1}\" height=\"{:.1}\" \
         fill=\"none\" stroke=\"black\"/>",
        W - ML - MR,
        H - MT - MB
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        let _ = write!(
            svg,
            "<line x1=\"{0:.1}\" y1=\"{1:.1}\" x2=\"{0:.1}\" y2=\"{2:.1}\" stroke=\"black\"/>\n\
             <text x=\"{0:.1}\" y=\"{3:.1}\" text-anchor=\"middle\">{4:.3e}</text>\n",
            sx(xv),
            H - MB,
            H - MB + 5.0,
            H - MB + 20.0,
            xv
        );
        let _ = write!(
            svg,
            "<line x1=\"{0}\" y1=\"{1:.1}\" x2=\"{2:.1}\" y2=\"{1:.1}\" stroke=\"black\"/>\n\
             <text x=\"{3:.1}\" y=\"{4:.1}\" text-anchor=\"end\">{5:.3e}</text>\n",
            ML,
            sy(yv),
            ML - 5.0,
            ML - 8.0,
            sy(yv) + 4.0,
            yv
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.1})\">{y_label}</text>\n",
        (ML + W - MR) / 2.0,
        H - 8.0,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    );
    if !points.is_empty() {
        let mut path = String::new();
        for &(x, y) in points {
            let _ = write!(path, "{:.2},{:.2} ", sx(x), sy(y));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#156082\" stroke-width=\"1.5\"/>",
            path.trim_end()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Objective value against the serious step counter.
pub fn convergence_svg(history: &RunHistory) -> String {
    let mut points = Vec::with_capacity(history.records.len() + 1);
    if let Some(first) = history.records.first() {
        points.push((0.0, first.f_start));
    }
    for r in &history.records {
        points.push(((r.j + 1) as f64, r.f_end));
    }
    line_plot_svg("objective by serious step", "serious step", "objective", &points)
}

/// Vertical opening along the contact boundary.
pub fn opening_profile_svg(model: &DelaminationModel, v: &DVector<f64>) -> String {
    let points: Vec<(f64, f64)> = model
        .contact_points()
        .iter()
        .map(|p| {
            let x = model.mesh().nodes()[p.node][0];
            (x, p.dof.map_or(0.0, |d| v[d]))
        })
        .collect();
    line_plot_svg("contact opening profile", "x (mm)", "opening (mm)", &points)
}

/// Balance-recovered traction along the contact boundary.
pub fn reaction_profile_svg(model: &DelaminationModel, v: &DVector<f64>, f2: f64) -> String {
    let points: Vec<(f64, f64)> = model
        .reactions(v, f2)
        .expect("displacement matches the model")
        .iter()
        .map(|r| (model.mesh().nodes()[r.node][0], r.traction_from_balance))
        .collect();
    line_plot_svg("contact reaction profile", "x (mm)", "traction (N/mm^2)", &points)
}
