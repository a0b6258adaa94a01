//! Outer/inner loop orchestration of the bundle method.
//!
//! The inner loop holds the serious point fixed, accumulates planes, and
//! raises the proximity parameter tau until a trial point passes the
//! acceptance test. The outer loop moves to accepted points, carries a tau
//! memory between loops, recycles planes to the new anchor, and re-queries
//! the curvature matrix. Stopping is practical: a serious step that is small
//! in both step length and value decrease, five consecutive small null
//! steps, or the inner iteration cap all end the run at the current point.

use crate::model::{MultiplierSet, Plane, PlaneTag, WorkingModel};
use crate::oracle::{
    downshift_plane, recycle, standard_plane, OracleConfig, OracleError, OracleVariant, PointData,
};
use crate::problems::NonsmoothProblem;
use crate::qp::{check_positive_definite, Polyhedron, QpError, TangentSolver};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Raising tau past this aborts the run; the proximity subproblems have
/// degenerated to steps of length zero.
pub const TAU_OVERFLOW: f64 = 1e30;

/// Consecutive small null steps required before declaring the point optimal.
pub const NULL_STALL_COUNT: usize = 5;

/// Plane multipliers above this protect their plane from pruning.
const ACTIVE_MULTIPLIER_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("start point violates the constraints")]
    InfeasibleStart,
    #[error("objective returned a non-finite value at {0}")]
    NonFiniteValue(String),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Tunable constants of the method.
///
/// The ratio thresholds are ordered `0 < gamma < gamma_relax < 1` and
/// `gamma < gamma_tilde < 1`; the curvature clip `q` stays below the tau
/// memory cap `T` so a clipped matrix can always be regularized within the
/// cap.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DriverParams {
    /// Acceptance threshold for the descent ratio (gamma).
    pub gamma: f64,
    /// Ratio at or above which the tau memory halves after a serious step
    /// (Gamma).
    pub gamma_relax: f64,
    /// Secondary-ratio threshold at or above which tau doubles on a null
    /// step.
    pub gamma_tilde: f64,
    /// Eigenvalue clip bound for curvature matrices (q).
    pub curvature_bound: f64,
    /// Upper cap for the tau memory (T).
    pub memory_cap: f64,
    /// Relative step-length stopping tolerance.
    pub tol_step: f64,
    /// Relative value-decrease stopping tolerance.
    pub tol_value: f64,
    /// Inner iteration cap per outer loop.
    pub k_max: usize,
    /// Outer iteration cap.
    pub j_max: usize,
    /// Maximum number of planes the working model may hold.
    pub plane_budget: usize,
    pub oracle: OracleConfig,
}

impl Default for DriverParams {
    fn default() -> Self {
        DriverParams {
            gamma: 0.01,
            gamma_relax: 0.6,
            gamma_tilde: 0.5,
            curvature_bound: 1e6,
            memory_cap: 1e8,
            tol_step: 1e-5,
            tol_value: 1e-5,
            k_max: 50,
            j_max: 500,
            plane_budget: 100,
            oracle: OracleConfig::default(),
        }
    }
}

impl DriverParams {
    pub fn validate(&self) -> Result<(), DriverError> {
        let bad = |msg: String| Err(DriverError::InvalidParams(msg));
        if !(self.gamma > 0.0 && self.gamma < self.gamma_relax && self.gamma_relax < 1.0) {
            return bad(format!(
                "need 0 < gamma < gamma_relax < 1, got {} and {}",
                self.gamma, self.gamma_relax
            ));
        }
        if !(self.gamma_tilde > self.gamma && self.gamma_tilde < 1.0) {
            return bad(format!(
                "need gamma < gamma_tilde < 1, got {} and {}",
                self.gamma, self.gamma_tilde
            ));
        }
        if !(self.curvature_bound > 0.0 && self.curvature_bound < self.memory_cap) {
            return bad(format!(
                "need 0 < curvature_bound < memory_cap, got {} and {}",
                self.curvature_bound, self.memory_cap
            ));
        }
        if !(self.tol_step > 0.0 && self.tol_value > 0.0) {
            return bad("stopping tolerances must be positive".into());
        }
        if self.k_max == 0 || self.j_max == 0 {
            return bad("iteration caps must be positive".into());
        }
        if self.plane_budget < 8 {
            return bad(format!(
                "plane budget {} cannot hold the per-step protected planes",
                self.plane_budget
            ));
        }
        Ok(())
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// A serious step fell below both stopping tolerances.
    SmallSeriousStep,
    /// Five consecutive null steps were below both stopping tolerances.
    NullStepStall,
    /// The inner loop exhausted its iteration cap; the current point is
    /// declared optimal.
    InnerIterationLimit,
    /// The outer loop exhausted its iteration cap without converging.
    OuterIterationLimit,
    /// Tau exceeded the overflow bound; the run failed.
    TauOverflow,
}

impl StopReason {
    /// Whether the reason counts as successful convergence.
    pub fn is_converged(self) -> bool {
        matches!(
            self,
            StopReason::SmallSeriousStep
                | StopReason::NullStepStall
                | StopReason::InnerIterationLimit
        )
    }
}

/// One tangent solve and its acceptance bookkeeping. `tau` is the value used
/// in the solve, before any doubling decided by this iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerTrace {
    pub k: usize,
    pub tau: f64,
    pub step_norm: f64,
    /// Objective at the trial point; equals the anchor value when the solve
    /// returned the anchor itself.
    pub f_trial: f64,
    pub model_value: f64,
    /// Acceptance ratio; absent at a proximal fixpoint.
    pub rho: Option<f64>,
    /// Secondary ratio after the model update; a fixpoint records 1 so the
    /// tau-doubling rule reads uniformly from the trace.
    pub rho_tilde: Option<f64>,
    /// |aggregate plane - first-order model| at the trial point.
    pub aggregation_gap: f64,
    pub kkt_residual: f64,
    pub accepted: bool,
}

/// One outer loop: statistics plus the inner trace that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterRecord {
    pub j: usize,
    pub f_start: f64,
    pub f_end: f64,
    pub step_norm: f64,
    pub inner_iterations: usize,
    pub tau_final: f64,
    /// Acceptance ratio of the serious step; `None` when the loop ended
    /// without one.
    pub rho_final: Option<f64>,
    /// Memory before the positive-definiteness raise and cap.
    pub tau_sharp_raw: Option<f64>,
    /// Memory handed to the next loop.
    pub tau_sharp_next: Option<f64>,
    pub inner: Vec<InnerTrace>,
}

/// Full account of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunHistory {
    pub records: Vec<OuterRecord>,
    pub final_point: Vec<f64>,
    pub final_value: f64,
    pub stop_reason: StopReason,
    /// `||(Q + tau I)(y - x)||` of one extra tangent solve at the final
    /// point; small values certify approximate stationarity.
    pub certificate_residual: f64,
}

impl RunHistory {
    pub fn is_converged(&self) -> bool {
        self.stop_reason.is_converged()
    }

    pub fn serious_steps(&self) -> usize {
        self.records.iter().filter(|r| r.rho_final.is_some()).count()
    }
}

/// Descent ratio rho = (f(x) - f(y)) / (f(x) - Phi(y, x)).
///
/// `None` signals a vanishing denominator, which happens exactly when the
/// trial point collapses onto the anchor; the caller routes that to the
/// stopping logic.
pub fn acceptance_ratio(f_x: f64, f_y: f64, phi2_y: f64) -> Option<f64> {
    let denom = f_x - phi2_y;
    if denom <= denominator_floor(f_x) {
        return None;
    }
    Some((f_x - f_y) / denom)
}

/// Secondary ratio rho~ = (f(x) - Phi_next(y, x)) / (f(x) - Phi(y, x)),
/// evaluated at the same trial point after the model update.
pub fn secondary_ratio(f_x: f64, phi2_next_y: f64, phi2_y: f64) -> Option<f64> {
    let denom = f_x - phi2_y;
    if denom <= denominator_floor(f_x) {
        return None;
    }
    Some((f_x - phi2_next_y) / denom)
}

fn denominator_floor(f_x: f64) -> f64 {
    1e-14 * (1.0 + f_x.abs())
}

/// Tau doubles on a null step exactly when the secondary ratio reaches the
/// threshold (inclusive).
pub fn update_tau_inner(tau: f64, rho_tilde: f64, gamma_tilde: f64) -> f64 {
    if rho_tilde >= gamma_tilde {
        2.0 * tau
    } else {
        tau
    }
}

/// Memory for the next loop: keep tau after an ordinary serious step, halve
/// it after a very good one (ratio at or above `gamma_relax`), raise it
/// minimally so `Q_next + tau I` stays positive definite, cap at the memory
/// bound. Returns `(raw, capped)`.
pub fn update_memory(
    tau_final: f64,
    rho_final: f64,
    params: &DriverParams,
    q_next: &DMatrix<f64>,
) -> (f64, f64) {
    let raw = if rho_final >= params.gamma_relax { 0.5 * tau_final } else { tau_final };
    let mut raised = raw;
    if !check_positive_definite(q_next, raised) {
        let eigs = q_next.symmetric_eigenvalues();
        let lam_min = eigs.min();
        // The margin is relative to the curvature scale: an absolute sliver
        // would leave Q + tau I with condition numbers past what the tangent
        // solver can answer accurately.
        let margin = 1e-7 * (1.0 + eigs.amax());
        raised = raised.max(-lam_min + margin);
        while !check_positive_definite(q_next, raised) {
            raised *= 2.0;
        }
    }
    (raw, raised.min(params.memory_cap))
}

/// Eigenvalue clip of a symmetric matrix to `[-bound, bound]`. Matrices whose
/// Gershgorin discs already sit inside the interval pass through unchanged.
pub fn clip_curvature(q_raw: &DMatrix<f64>, bound: f64) -> DMatrix<f64> {
    let n = q_raw.nrows();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let radius: f64 = (0..n).filter(|&j| j != i).map(|j| q_raw[(i, j)].abs()).sum();
        lo = lo.min(q_raw[(i, i)] - radius);
        hi = hi.max(q_raw[(i, i)] + radius);
    }
    if lo >= -bound && hi <= bound {
        return q_raw.clone();
    }
    let eig = q_raw.clone().symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| l.clamp(-bound, bound));
    let mut q = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    // The reconstruction is symmetric only up to roundoff.
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (q[(i, j)] + q[(j, i)]);
            q[(i, j)] = avg;
            q[(j, i)] = avg;
        }
    }
    q
}

enum InnerOutcome {
    Serious {
        trial: PointData,
        tau_final: f64,
        rho_final: f64,
        step_norm: f64,
        traces: Vec<InnerTrace>,
    },
    Converged {
        reason: StopReason,
        traces: Vec<InnerTrace>,
    },
    TauOverflow {
        traces: Vec<InnerTrace>,
    },
}

struct LoopContext<'a> {
    problem: &'a dyn NonsmoothProblem,
    constraints: &'a Polyhedron,
    params: &'a DriverParams,
    downshift_c: f64,
    clarke_at_anchor: DVector<f64>,
}

fn inner_loop(
    ctx: &LoopContext,
    model: &mut WorkingModel,
    solver: &mut TangentSolver,
    memory: f64,
) -> Result<InnerOutcome, DriverError> {
    let params = ctx.params;
    let x = model.serious_point().clone();
    let f_x = model.value_at_point();
    let mut tau = memory;
    let mut small_nulls = 0usize;
    let mut traces: Vec<InnerTrace> = Vec::new();

    for k in 1..=params.k_max {
        if tau > TAU_OVERFLOW {
            return Ok(InnerOutcome::TauOverflow { traces });
        }
        let tau_solve = tau;
        let sol = solver.solve_tangent(model, tau_solve, ctx.constraints)?;
        let step = &sol.trial_point - &x;
        let step_norm = step.norm();
        let rel_step = step_norm / (1.0 + x.norm());
        let denom = f_x - sol.model_value;

        if denom <= denominator_floor(f_x) {
            // Proximal fixpoint: the trial point collapsed onto the anchor.
            // Count it as a small null step, still feed the model the anchor
            // planes, and double tau (the secondary ratio reads 1 here).
            let x_data = PointData::from_parts(
                x.clone(),
                f_x,
                ctx.clarke_at_anchor.clone(),
                ctx.problem.attaining_subgradient(&x, &step),
            );
            let y_data = PointData::from_parts(
                sol.trial_point.clone(),
                f_x,
                ctx.clarke_at_anchor.clone(),
                ctx.clarke_at_anchor.clone(),
            );
            let gap = add_null_planes(ctx, model, &sol.multipliers, &x_data, &y_data)?;
            tau = update_tau_inner(tau, 1.0, params.gamma_tilde);
            traces.push(InnerTrace {
                k,
                tau: tau_solve,
                step_norm,
                f_trial: f_x,
                model_value: sol.model_value,
                rho: None,
                rho_tilde: Some(1.0),
                aggregation_gap: gap,
                kkt_residual: sol.kkt_residual,
                accepted: false,
            });
            small_nulls += 1;
            if small_nulls >= NULL_STALL_COUNT {
                return Ok(InnerOutcome::Converged { reason: StopReason::NullStepStall, traces });
            }
            continue;
        }

        let y_data = PointData::gather(ctx.problem, sol.trial_point.clone(), None);
        if !y_data.value.is_finite() {
            return Err(DriverError::NonFiniteValue(format!(
                "{:?}",
                sol.trial_point.as_slice()
            )));
        }
        let rho = (f_x - y_data.value) / denom;

        if rho >= params.gamma {
            traces.push(InnerTrace {
                k,
                tau: tau_solve,
                step_norm,
                f_trial: y_data.value,
                model_value: sol.model_value,
                rho: Some(rho),
                rho_tilde: None,
                aggregation_gap: 0.0,
                kkt_residual: sol.kkt_residual,
                accepted: true,
            });
            return Ok(InnerOutcome::Serious {
                trial: y_data,
                tau_final: tau_solve,
                rho_final: rho,
                step_norm,
                traces,
            });
        }

        // Null step: enrich the model, then decide on tau.
        let x_data = PointData::from_parts(
            x.clone(),
            f_x,
            ctx.clarke_at_anchor.clone(),
            ctx.problem.attaining_subgradient(&x, &step),
        );
        let gap = add_null_planes(ctx, model, &sol.multipliers, &x_data, &y_data)?;
        let phi2_next = model.eval_second_order(&sol.trial_point);
        let rho_tilde = (f_x - phi2_next) / denom;
        tau = update_tau_inner(tau, rho_tilde, params.gamma_tilde);

        traces.push(InnerTrace {
            k,
            tau: tau_solve,
            step_norm,
            f_trial: y_data.value,
            model_value: sol.model_value,
            rho: Some(rho),
            rho_tilde: Some(rho_tilde),
            aggregation_gap: gap,
            kkt_residual: sol.kkt_residual,
            accepted: false,
        });

        let rel_value = (f_x - y_data.value).abs() / (1.0 + f_x.abs());
        if rel_step < params.tol_step && rel_value < params.tol_value {
            small_nulls += 1;
            if small_nulls >= NULL_STALL_COUNT {
                return Ok(InnerOutcome::Converged { reason: StopReason::NullStepStall, traces });
            }
        } else {
            small_nulls = 0;
        }
    }
    Ok(InnerOutcome::Converged { reason: StopReason::InnerIterationLimit, traces })
}

/// Adds the null-step planes (the pre-update aggregate plus the oracle's
/// planes), prunes back to the budget, and returns the gap between the
/// aggregate and the first-order model at the trial point.
fn add_null_planes(
    ctx: &LoopContext,
    model: &mut WorkingModel,
    multipliers: &MultiplierSet,
    x_data: &PointData,
    y_data: &PointData,
) -> Result<f64, DriverError> {
    let lambda = multipliers.plane_multipliers().clone();
    let active_seqs: Vec<u64> = model
        .planes()
        .iter()
        .zip(lambda.iter())
        .filter(|(_, &l)| l > ACTIVE_MULTIPLIER_TOL)
        .map(|(e, _)| e.seq)
        .collect();
    let exactness_seq = model
        .planes()
        .iter()
        .find(|e| e.plane.tag == PlaneTag::Exactness)
        .map(|e| e.seq);

    let aggregate = model.aggregate_plane(multipliers, &y_data.point)?;
    let gap = (aggregate.value_at(&y_data.point, &x_data.point)
        - model.eval_first_order(&y_data.point))
    .abs();

    let mut fresh: Vec<Plane> = Vec::new();
    match ctx.params.oracle.variant {
        OracleVariant::Standard => fresh.push(standard_plane(x_data)),
        OracleVariant::Downshift => fresh.push(downshift_plane(x_data, y_data, ctx.downshift_c)),
        OracleVariant::Modified => {
            fresh.push(standard_plane(x_data));
            fresh.push(downshift_plane(x_data, y_data, ctx.downshift_c));
        }
    }
    fresh.push(aggregate);

    // Protection priority when the budget is tight: the exactness plane,
    // then this step's planes, then multiplier-active survivors.
    let mut protected: Vec<u64> = Vec::new();
    if let Some(seq) = exactness_seq {
        protected.push(seq);
    }
    for plane in fresh {
        // Planes recur verbatim (anchor planes between null steps, the
        // aggregate under a singleton multiplier); duplicates would
        // degenerate the tangent program, so reuse the existing entry.
        let seq = match find_duplicate(model, &plane) {
            Some(seq) => seq,
            None => model.push(plane)?,
        };
        if !protected.contains(&seq) {
            protected.push(seq);
        }
    }
    for seq in active_seqs {
        if protected.len() >= model.plane_budget() {
            break;
        }
        if !protected.contains(&seq) {
            protected.push(seq);
        }
    }
    model.prune(&protected)?;
    Ok(gap)
}

fn find_duplicate(model: &WorkingModel, plane: &Plane) -> Option<u64> {
    let scale = 1.0 + plane.offset.abs() + plane.gradient.amax();
    model
        .planes()
        .iter()
        .find(|e| {
            (e.plane.offset - plane.offset).abs() <= 1e-12 * scale
                && (&e.plane.gradient - &plane.gradient).amax() <= 1e-12 * scale
        })
        .map(|e| e.seq)
}

/// Runs the method and reports every outer record through `observer`.
pub fn solve_observed(
    problem: &dyn NonsmoothProblem,
    constraints: &Polyhedron,
    start: &DVector<f64>,
    params: &DriverParams,
    mut observer: impl FnMut(&OuterRecord),
) -> Result<RunHistory, DriverError> {
    params.validate()?;
    let n = problem.dimension();
    if start.len() != n || constraints.dimension() != n {
        return Err(DriverError::InvalidParams(format!(
            "dimension mismatch: problem {n}, start {}, constraints {}",
            start.len(),
            constraints.dimension()
        )));
    }
    if !constraints.is_satisfied(start, 1e-9) {
        return Err(DriverError::InfeasibleStart);
    }
    let f_start = problem.value(start);
    if !f_start.is_finite() {
        return Err(DriverError::NonFiniteValue(format!("{:?}", start.as_slice())));
    }
    let downshift_c = params.oracle.downshift.resolve(f_start, start)?;

    // The first exactness subgradient attains the directional derivative for
    // the zero direction, which resolves ties toward a definite branch; the
    // averaged Clarke element can vanish at a kink and freeze the whole run.
    let zero_dir = DVector::zeros(n);
    let mut anchor = PointData::gather(problem, start.clone(), Some(&zero_dir));
    let mut curvature = clip_curvature(
        &problem.curvature(start).unwrap_or_else(|| DMatrix::zeros(n, n)),
        params.curvature_bound,
    );
    let mut memory = {
        let lam_min = curvature.symmetric_eigenvalues().min();
        (1.1 * (-lam_min).max(0.0)).max(1.0)
    };

    let mut model = WorkingModel::new(
        anchor.point.clone(),
        anchor.value,
        curvature.clone(),
        params.plane_budget,
        Plane::new(
            anchor.value,
            anchor.directional_subgradient.clone(),
            PlaneTag::Exactness,
            anchor.point.clone(),
        ),
    )?;
    let mut solver = TangentSolver::new();
    let mut records: Vec<OuterRecord> = Vec::new();
    let mut stop = StopReason::OuterIterationLimit;
    let mut last_tau = memory;

    for j in 1..=params.j_max {
        let ctx = LoopContext {
            problem,
            constraints,
            params,
            downshift_c,
            clarke_at_anchor: anchor.subgradient.clone(),
        };
        let outcome = inner_loop(&ctx, &mut model, &mut solver, memory)?;
        match outcome {
            InnerOutcome::Converged { reason, traces } => {
                if let Some(last) = traces.last() {
                    last_tau = last.tau;
                }
                let record = stalled_record(j, anchor.value, memory, traces);
                observer(&record);
                records.push(record);
                stop = reason;
                break;
            }
            InnerOutcome::TauOverflow { traces } => {
                if let Some(last) = traces.last() {
                    last_tau = last.tau;
                }
                let record = stalled_record(j, anchor.value, memory, traces);
                observer(&record);
                records.push(record);
                stop = StopReason::TauOverflow;
                break;
            }
            InnerOutcome::Serious { trial, tau_final, rho_final, step_norm, traces } => {
                last_tau = tau_final;
                let rel_step = step_norm / (1.0 + anchor.point.norm());
                let rel_value = (anchor.value - trial.value) / (1.0 + anchor.value.abs());
                let small_serious = rel_step < params.tol_step && rel_value < params.tol_value;

                let q_next = clip_curvature(
                    &problem.curvature(&trial.point).unwrap_or_else(|| DMatrix::zeros(n, n)),
                    params.curvature_bound,
                );
                let (tau_raw, tau_next) = update_memory(tau_final, rho_final, params, &q_next);

                let record = OuterRecord {
                    j,
                    f_start: anchor.value,
                    f_end: trial.value,
                    step_norm,
                    inner_iterations: traces.len(),
                    tau_final,
                    rho_final: Some(rho_final),
                    tau_sharp_raw: Some(tau_raw),
                    tau_sharp_next: Some(tau_next),
                    inner: traces,
                };
                observer(&record);
                records.push(record);

                // Move: recycle planes to the new anchor around a fresh
                // exactness plane whose subgradient attains the directional
                // derivative back toward the old anchor.
                let old_point = anchor.point.clone();
                let back = &old_point - &trial.point;
                let new_anchor = PointData::from_parts(
                    trial.point.clone(),
                    trial.value,
                    trial.subgradient.clone(),
                    problem.attaining_subgradient(&trial.point, &back),
                );
                let old_planes: Vec<Plane> =
                    model.planes().iter().map(|e| e.plane.clone()).collect();
                let mut moved = recycle(&old_planes, &old_point, &new_anchor, downshift_c);
                // The recycler's own exactness plane is redundant: the new
                // model starts from one built right below.
                moved.retain(|p| p.tag != PlaneTag::Exactness);
                if moved.len() > params.plane_budget - 1 {
                    moved.drain(0..moved.len() - (params.plane_budget - 1));
                }

                curvature = q_next;
                memory = tau_next;
                anchor = new_anchor;
                model = WorkingModel::new(
                    anchor.point.clone(),
                    anchor.value,
                    curvature.clone(),
                    params.plane_budget,
                    Plane::new(
                        anchor.value,
                        anchor.directional_subgradient.clone(),
                        PlaneTag::Exactness,
                        anchor.point.clone(),
                    ),
                )?;
                for plane in moved {
                    model.push(plane)?;
                }
                // Plane sequence numbers restart with the model; stale sets
                // must not alias into it.
                solver.clear_warm_start();

                if small_serious {
                    stop = StopReason::SmallSeriousStep;
                    break;
                }
            }
        }
    }

    // Stationarity certificate: one extra tangent solve at the final point,
    // at the tau the next loop would start with. `last_tau` alone can predate
    // the final move and sit below the definiteness floor of the new branch.
    let cert_tau = last_tau.max(memory);
    let certificate_residual = match solver.solve_tangent(&model, cert_tau, constraints) {
        Ok(sol) => {
            let d = &sol.trial_point - model.serious_point();
            let h = model.curvature() + DMatrix::identity(n, n) * cert_tau;
            (h * d).norm()
        }
        Err(_) => f64::NAN,
    };

    Ok(RunHistory {
        records,
        final_point: anchor.point.iter().cloned().collect(),
        final_value: anchor.value,
        stop_reason: stop,
        certificate_residual,
    })
}

fn stalled_record(j: usize, f_anchor: f64, memory: f64, traces: Vec<InnerTrace>) -> OuterRecord {
    OuterRecord {
        j,
        f_start: f_anchor,
        f_end: f_anchor,
        step_norm: 0.0,
        inner_iterations: traces.len(),
        tau_final: traces.last().map(|t| t.tau).unwrap_or(memory),
        rho_final: None,
        tau_sharp_raw: None,
        tau_sharp_next: None,
        inner: traces,
    }
}

/// Runs the method without progress reporting.
pub fn solve(
    problem: &dyn NonsmoothProblem,
    constraints: &Polyhedron,
    start: &DVector<f64>,
    params: &DriverParams,
) -> Result<RunHistory, DriverError> {
    solve_observed(problem, constraints, start, params, |_| {})
}
