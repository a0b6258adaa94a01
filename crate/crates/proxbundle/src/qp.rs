//! Tangent program solver.
//!
//! Each bundle step minimizes the second-order model plus a proximity term
//! over the feasible polyhedron. In epigraph form this is a small strictly
//! convex QP in (d, t), d = y - x:
//!
//! ```text
//! minimize   t + 1/2 d^T (Q + tau I) d
//! subject to a_i + g_i^T d <= t       (one row per plane)
//!            A (x + d) <= b
//! ```
//!
//! The plane multipliers sum to one because the epigraph variable has unit
//! cost; they are exactly the convex weights the aggregation step needs, so
//! the solver must produce trustworthy duals, not just a minimizer. A primal
//! active-set iteration does that: the working set holds at least one plane
//! at all times, each equality-constrained subproblem is reduced to a dual
//! Schur system solved by full-pivot LU with iterative refinement, and
//! solves with `Q + tau I` are cached per plane while tau is unchanged.

use crate::model::{ModelError, ModelPlane, MultiplierSet, WorkingModel};
use crate::problems::BoxBounds;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

/// Smallest eigenvalue of `Q + tau I` must exceed this for the tangent
/// program to count as strictly convex.
pub const POSITIVE_DEFINITE_MARGIN: f64 = 1e-12;

/// Duals below this are treated as negative and their constraint is dropped.
const DUAL_DROP_TOL: f64 = 1e-10;

/// A working-set step smaller than this (relative) means the subproblem
/// minimizer has been reached.
const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("anchor point violates the polyhedron in row {row} by {violation:.3e}")]
    Infeasible { row: usize, violation: f64 },
    #[error("Q + tau I is not positive definite (tau = {tau:.6e})")]
    NotPositiveDefinite { tau: f64 },
    #[error("active-set iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

impl From<ModelError> for QpError {
    fn from(e: ModelError) -> Self {
        QpError::NumericalBreakdown(e.to_string())
    }
}

/// Linear inequality constraints `A x <= b`.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Polyhedron {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, QpError> {
        if a.nrows() != b.len() {
            return Err(QpError::DimensionMismatch(format!(
                "constraint matrix has {} rows but right-hand side has {}",
                a.nrows(),
                b.len()
            )));
        }
        Ok(Polyhedron { a, b })
    }

    /// No constraints at all in dimension `n`.
    pub fn unconstrained(n: usize) -> Self {
        Polyhedron { a: DMatrix::zeros(0, n), b: DVector::zeros(0) }
    }

    /// Two rows per coordinate: `x_i <= upper_i` and `-x_i <= -lower_i`.
    pub fn from_box(bounds: &BoxBounds) -> Self {
        let n = bounds.dimension();
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(2 * i, i)] = 1.0;
            b[2 * i] = bounds.upper[i];
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -bounds.lower[i];
        }
        Polyhedron { a, b }
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn is_satisfied(&self, x: &DVector<f64>, tol: f64) -> bool {
        (0..self.rows()).all(|r| self.a.row(r).transpose().dot(x) <= self.b[r] + tol)
    }
}

/// Solution of one tangent program.
#[derive(Debug, Clone)]
pub struct TangentSolution {
    pub trial_point: DVector<f64>,
    /// Second-order model value at the trial point (without the tau term).
    pub model_value: f64,
    pub multipliers: MultiplierSet,
    /// Absolute KKT defect: stationarity, multiplier-sum, complementarity,
    /// primal feasibility and dual sign residuals added together.
    pub kkt_residual: f64,
}

/// True iff the smallest eigenvalue of `Q + tau I` exceeds
/// [`POSITIVE_DEFINITE_MARGIN`]. A Gershgorin bound short-circuits the
/// eigenvalue computation when it is already conclusive.
pub fn check_positive_definite(q: &DMatrix<f64>, tau: f64) -> bool {
    let n = q.nrows();
    let mut gersh = f64::INFINITY;
    for i in 0..n {
        let radius: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)].abs()).sum();
        gersh = gersh.min(q[(i, i)] + tau - radius);
    }
    if gersh > POSITIVE_DEFINITE_MARGIN {
        return true;
    }
    let shifted = q + DMatrix::identity(n, n) * tau;
    shifted.symmetric_eigenvalues().min() > POSITIVE_DEFINITE_MARGIN
}

#[derive(Debug, Clone)]
struct WarmStart {
    plane_seqs: Vec<u64>,
    rows: Vec<usize>,
}

type WorkingSetSolution = (DVector<f64>, f64, DVector<f64>, DVector<f64>);

/// Active-set solver with factorization caching and warm starts across calls.
#[derive(Debug, Default)]
pub struct TangentSolver {
    factor_key: Option<(u64, u64)>,
    chol: Option<Cholesky<f64, Dyn>>,
    h: Option<DMatrix<f64>>,
    plane_solves: HashMap<u64, DVector<f64>>,
    warm: Option<WarmStart>,
}

impl TangentSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forget the previous working set (kept factorizations stay valid).
    pub fn clear_warm_start(&mut self) {
        self.warm = None;
    }

    fn refresh_factorization(&mut self, model: &WorkingModel, tau: f64) -> Result<(), QpError> {
        let key = (model.id(), tau.to_bits());
        if self.factor_key == Some(key) {
            return Ok(());
        }
        let n = model.dimension();
        let h = model.curvature() + DMatrix::identity(n, n) * tau;
        let chol = Cholesky::new(h.clone()).ok_or(QpError::NotPositiveDefinite { tau })?;
        self.factor_key = Some(key);
        self.chol = Some(chol);
        self.h = Some(h);
        self.plane_solves.clear();
        Ok(())
    }

    /// `H^{-1} rhs` with one refinement pass.
    fn solve_h(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let chol = self.chol.as_ref().expect("factorization present");
        let h = self.h.as_ref().expect("matrix present");
        let mut s = chol.solve(rhs);
        let r = rhs - h * &s;
        s += chol.solve(&r);
        s
    }

    fn plane_solve(&mut self, entry: &ModelPlane) -> DVector<f64> {
        if let Some(s) = self.plane_solves.get(&entry.seq) {
            return s.clone();
        }
        let s = self.solve_h(&entry.plane.gradient);
        self.plane_solves.insert(entry.seq, s.clone());
        s
    }

    fn row_solve(
        &mut self,
        constraints: &Polyhedron,
        cache: &mut [Option<DVector<f64>>],
        r: usize,
    ) -> DVector<f64> {
        if let Some(s) = &cache[r] {
            return s.clone();
        }
        let s = self.solve_h(&constraints.matrix().row(r).transpose());
        cache[r] = Some(s.clone());
        s
    }

    /// Minimizer of the equality-constrained subproblem for one working set,
    /// via the dual Schur system
    ///
    /// ```text
    /// [ U   V   1 ] [ lambda ]   [ a_P      ]
    /// [ V^T W   0 ] [ eta    ] = [ -bbar_R  ]
    /// [ 1^T 0   0 ] [ t      ]   [ 1        ]
    /// ```
    ///
    /// with `U = G^T H^{-1} G`, `V = G^T H^{-1} Abar^T` and
    /// `W = Abar H^{-1} Abar^T`, then `d = -H^{-1}(G lambda + Abar^T eta)`.
    #[allow(clippy::too_many_arguments)]
    fn working_set_step(
        &mut self,
        planes: &[ModelPlane],
        constraints: &Polyhedron,
        row_cache: &mut [Option<DVector<f64>>],
        bbar: &DVector<f64>,
        act_planes: &[usize],
        act_rows: &[usize],
    ) -> Result<WorkingSetSolution, QpError> {
        let np = act_planes.len();
        let nr = act_rows.len();
        let q = np + nr + 1;

        let plane_hs: Vec<DVector<f64>> =
            act_planes.iter().map(|&i| self.plane_solve(&planes[i])).collect();
        let row_hs: Vec<DVector<f64>> = act_rows
            .iter()
            .map(|&r| self.row_solve(constraints, row_cache, r))
            .collect();

        let mut m = DMatrix::zeros(q, q);
        let mut rhs = DVector::zeros(q);
        for (ki, &i) in act_planes.iter().enumerate() {
            let gi = &planes[i].plane.gradient;
            for kj in 0..np {
                m[(ki, kj)] = gi.dot(&plane_hs[kj]);
            }
            for kr in 0..nr {
                m[(ki, np + kr)] = gi.dot(&row_hs[kr]);
            }
            m[(ki, np + nr)] = 1.0;
            m[(np + nr, ki)] = 1.0;
            rhs[ki] = planes[i].plane.offset;
        }
        for (kr, &r) in act_rows.iter().enumerate() {
            let ar = constraints.matrix().row(r).transpose();
            for kj in 0..np {
                m[(np + kr, kj)] = ar.dot(&plane_hs[kj]);
            }
            for ks in 0..nr {
                m[(np + kr, np + ks)] = ar.dot(&row_hs[ks]);
            }
            rhs[np + kr] = -bbar[r];
        }
        rhs[np + nr] = 1.0;

        // Entries of M span many orders of magnitude when H is barely
        // positive definite (U scales with 1/lambda_min). Symmetric Ruiz
        // equilibration keeps the pivoting honest; without it the LU reads
        // near-parallel planes as an exactly singular system.
        let mut scale = DVector::from_element(q, 1.0);
        for _ in 0..2 {
            for i in 0..q {
                let row_max = (0..q)
                    .map(|j| (m[(i, j)] * scale[i] * scale[j]).abs())
                    .fold(0.0f64, f64::max);
                if row_max > 0.0 {
                    scale[i] /= row_max.sqrt();
                }
            }
        }
        let mut ms = m.clone();
        for i in 0..q {
            for j in 0..q {
                ms[(i, j)] *= scale[i] * scale[j];
            }
        }
        let lu = ms.full_piv_lu();
        let scaled_rhs = rhs.component_mul(&scale);
        let mut z = lu
            .solve(&scaled_rhs)
            .ok_or_else(|| QpError::NumericalBreakdown("singular working-set system".into()))?
            .component_mul(&scale);
        if !z.iter().all(|v| v.is_finite()) {
            return Err(QpError::NumericalBreakdown("non-finite working-set solution".into()));
        }
        for _ in 0..2 {
            let res = &rhs - &m * &z;
            if let Some(delta) = lu.solve(&res.component_mul(&scale)) {
                z += delta.component_mul(&scale);
            }
        }

        let lam = DVector::from_fn(np, |k, _| z[k]);
        let eta = DVector::from_fn(nr, |k, _| z[np + k]);
        let t = z[np + nr];
        let n = planes[0].plane.gradient.len();
        let mut d = DVector::zeros(n);
        for k in 0..np {
            d -= &plane_hs[k] * lam[k];
        }
        for k in 0..nr {
            d -= &row_hs[k] * eta[k];
        }
        Ok((d, t, lam, eta))
    }

    /// Solve the tangent program for the given model, proximity parameter and
    /// constraints. The model's anchor must satisfy the constraints.
    pub fn solve_tangent(
        &mut self,
        model: &WorkingModel,
        tau: f64,
        constraints: &Polyhedron,
    ) -> Result<TangentSolution, QpError> {
        let n = model.dimension();
        if constraints.dimension() != n {
            return Err(QpError::DimensionMismatch(format!(
                "model dimension {} vs constraint dimension {}",
                n,
                constraints.dimension()
            )));
        }
        self.refresh_factorization(model, tau)?;

        let x = model.serious_point().clone();
        let planes: Vec<ModelPlane> = model.planes().to_vec();
        let p_total = planes.len();
        let m_total = constraints.rows();
        let mut row_cache: Vec<Option<DVector<f64>>> = vec![None; m_total];

        // Constraint data relative to the anchor: rows become abar^T d <= bbar.
        let mut bbar = DVector::zeros(m_total);
        for r in 0..m_total {
            let slack = constraints.rhs()[r] - constraints.matrix().row(r).transpose().dot(&x);
            if slack < -1e-7 {
                return Err(QpError::Infeasible { row: r, violation: -slack });
            }
            bbar[r] = slack.max(0.0);
        }

        let offsets: Vec<f64> = planes.iter().map(|e| e.plane.offset).collect();
        let a_scale = offsets.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let feas_tol = 1e-9 * (1.0 + a_scale);

        // Cold start: d = 0 with t on the highest plane, which is the only
        // active constraint there (ties resolve to the first such plane).
        let cold_t = offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cold_plane =
            offsets.iter().position(|&a| a == cold_t).expect("model holds at least one plane");

        let mut d = DVector::zeros(n);
        let mut t = cold_t;
        let mut act_planes: Vec<usize> = vec![cold_plane];
        let mut act_rows: Vec<usize> = Vec::new();

        // A warm start is usable only if its working-set minimizer is primal
        // feasible; then it serves as the starting iterate directly.
        if let Some(w) = self.warm.clone() {
            let wp: Vec<usize> = w
                .plane_seqs
                .iter()
                .filter_map(|seq| planes.iter().position(|e| e.seq == *seq))
                .collect();
            let wr: Vec<usize> = w.rows.iter().cloned().filter(|&r| r < m_total).collect();
            if !wp.is_empty() {
                if let Ok((wd, wt, _, _)) =
                    self.working_set_step(&planes, constraints, &mut row_cache, &bbar, &wp, &wr)
                {
                    let planes_ok = planes.iter().enumerate().all(|(i, e)| {
                        offsets[i] + e.plane.gradient.dot(&wd) <= wt + feas_tol
                    });
                    let rows_ok = (0..m_total).all(|r| {
                        constraints.matrix().row(r).transpose().dot(&wd)
                            <= bbar[r] + feas_tol * (1.0 + bbar[r].abs())
                    });
                    if planes_ok && rows_ok {
                        d = wd;
                        t = wt;
                        act_planes = wp;
                        act_rows = wr;
                    }
                }
            }
        }

        let max_it = 50 + 5 * (n + p_total + m_total);
        let mut visited: HashSet<(Vec<usize>, Vec<usize>)> = HashSet::new();
        // Degenerate instances can cycle under most-negative-dual pivoting;
        // the first detected repeat switches to lowest-index drops.
        let mut bland = false;
        let mut lam = DVector::zeros(act_planes.len());
        let mut eta = DVector::zeros(act_rows.len());

        let mut converged = false;
        for _ in 0..max_it {
            let step = match self.working_set_step(
                &planes,
                constraints,
                &mut row_cache,
                &bbar,
                &act_planes,
                &act_rows,
            ) {
                Ok(sol) => sol,
                Err(_) if act_planes.len() + act_rows.len() > 1 => {
                    // Redundant working set. Dependencies come from the
                    // plane side far more often than from the orthogonal box
                    // rows, so shed the newest plane while one can be spared.
                    if act_planes.len() > 1 {
                        act_planes.pop();
                    } else {
                        act_rows.pop();
                    }
                    let mut key = (act_planes.clone(), act_rows.clone());
                    key.0.sort_unstable();
                    key.1.sort_unstable();
                    if !visited.insert(key.clone()) {
                        if bland {
                            return Err(QpError::NumericalBreakdown(
                                "active-set cycle detected".into(),
                            ));
                        }
                        bland = true;
                        visited.clear();
                        visited.insert(key);
                    }
                    continue;
                }
                Err(e) => return Err(e),
            };
            let (ed, et, el, ee) = step;
            lam = el;
            eta = ee;

            let step_d = &ed - &d;
            let step_t = et - t;
            let step_norm = (step_d.norm_squared() + step_t * step_t).sqrt();
            if step_norm <= STEP_TOL * (1.0 + d.norm() + t.abs()) {
                // At the working-set minimizer: drop a negative dual or stop.
                let mut drop: Option<(bool, usize)> = None;
                if bland {
                    let mut best = usize::MAX;
                    for (k, &l) in lam.iter().enumerate() {
                        if l < -DUAL_DROP_TOL && act_planes.len() > 1 && act_planes[k] < best {
                            best = act_planes[k];
                            drop = Some((true, k));
                        }
                    }
                    if drop.is_none() {
                        let mut best = usize::MAX;
                        for (k, &e) in eta.iter().enumerate() {
                            if e < -DUAL_DROP_TOL && act_rows[k] < best {
                                best = act_rows[k];
                                drop = Some((false, k));
                            }
                        }
                    }
                } else {
                    let mut worst = -DUAL_DROP_TOL;
                    for (k, &l) in lam.iter().enumerate() {
                        if l < worst && act_planes.len() > 1 {
                            worst = l;
                            drop = Some((true, k));
                        }
                    }
                    for (k, &e) in eta.iter().enumerate() {
                        if e < worst {
                            worst = e;
                            drop = Some((false, k));
                        }
                    }
                }
                match drop {
                    Some((true, k)) => {
                        act_planes.remove(k);
                    }
                    Some((false, k)) => {
                        act_rows.remove(k);
                    }
                    None => {
                        d = ed;
                        t = et;
                        converged = true;
                        break;
                    }
                }
                let mut key = (act_planes.clone(), act_rows.clone());
                key.0.sort_unstable();
                key.1.sort_unstable();
                if !visited.insert(key.clone()) {
                    if bland {
                        return Err(QpError::NumericalBreakdown(
                            "active-set cycle detected".into(),
                        ));
                    }
                    bland = true;
                    visited.clear();
                    visited.insert(key);
                }
                continue;
            }

            // Longest feasible step toward the working-set minimizer; the
            // first blocking constraint joins the working set. Ties resolve
            // to planes before rows, lowest index first.
            let mut alpha = 1.0f64;
            let mut blocker: Option<(bool, usize)> = None;
            for (i, e) in planes.iter().enumerate() {
                if act_planes.contains(&i) {
                    continue;
                }
                let slack = t - offsets[i] - e.plane.gradient.dot(&d);
                let rate = step_t - e.plane.gradient.dot(&step_d);
                if rate < -1e-14 {
                    let a = slack.max(0.0) / (-rate);
                    if a < alpha - 1e-15 {
                        alpha = a;
                        blocker = Some((true, i));
                    }
                }
            }
            for r in 0..m_total {
                if act_rows.contains(&r) {
                    continue;
                }
                let row = constraints.matrix().row(r).transpose();
                let slack = bbar[r] - row.dot(&d);
                let rate = -row.dot(&step_d);
                if rate < -1e-14 {
                    let a = slack.max(0.0) / (-rate);
                    if a < alpha - 1e-15 {
                        alpha = a;
                        blocker = Some((false, r));
                    }
                }
            }

            d += step_d * alpha;
            t += step_t * alpha;
            match blocker {
                Some((true, i)) => act_planes.push(i),
                Some((false, r)) => act_rows.push(r),
                None => {}
            }
        }
        if !converged {
            return Err(QpError::IterationLimit(max_it));
        }

        // Assemble full-length multipliers and audit the KKT system.
        let mut lam_full = DVector::zeros(p_total);
        for (k, &i) in act_planes.iter().enumerate() {
            lam_full[i] = lam[k].max(0.0);
        }
        let mut eta_full = DVector::zeros(m_total);
        for (k, &r) in act_rows.iter().enumerate() {
            eta_full[r] = eta[k].max(0.0);
        }
        let lam_sum: f64 = lam_full.iter().sum();
        if lam_sum > 0.0 {
            lam_full /= lam_sum;
        }

        let h = self.h.as_ref().expect("matrix present");
        let mut stationarity = h * &d;
        for (i, e) in planes.iter().enumerate() {
            if lam_full[i] != 0.0 {
                stationarity += &e.plane.gradient * lam_full[i];
            }
        }
        for r in 0..m_total {
            if eta_full[r] != 0.0 {
                stationarity += constraints.matrix().row(r).transpose() * eta_full[r];
            }
        }
        let mut residual = stationarity.norm();
        residual += (lam_sum - 1.0).abs();
        for (i, e) in planes.iter().enumerate() {
            let slack = t - offsets[i] - e.plane.gradient.dot(&d);
            residual += (lam_full[i] * slack).abs();
            residual += (-slack).max(0.0);
        }
        for r in 0..m_total {
            let slack = bbar[r] - constraints.matrix().row(r).transpose().dot(&d);
            residual += (eta_full[r] * slack).abs();
            residual += (-slack).max(0.0);
        }
        residual += lam.iter().map(|l| (-l).max(0.0)).sum::<f64>();
        residual += eta.iter().map(|e| (-e).max(0.0)).sum::<f64>();

        self.warm = Some(WarmStart {
            plane_seqs: act_planes.iter().map(|&i| planes[i].seq).collect(),
            rows: act_rows.clone(),
        });

        let trial_point = &x + &d;
        let model_value = model.eval_second_order(&trial_point);
        let multipliers = MultiplierSet::new(lam_full, eta_full)?;
        Ok(TangentSolution { trial_point, model_value, multipliers, kkt_residual: residual })
    }
}
