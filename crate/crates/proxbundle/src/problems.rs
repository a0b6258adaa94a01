//! Objective interface and the built-in corpus of small nonsmooth instances.
//!
//! A problem exposes its value, one Clarke subgradient, a subgradient
//! attaining the generalized directional derivative along a given direction,
//! and optionally a curvature matrix. Two concrete families live here:
//!
//! * [`PiecewiseInstance`]: min or max of finitely many quadratics
//!   `1/2 x^T H_i x + p_i^T x + r_i`;
//! * [`CompositeInstance`]: a smooth quadratic plus weighted per-coordinate
//!   min-of-parabolas terms, the shape of the delamination energy at desk
//!   scale.
//!
//! [`grid_oracle`] is an exhaustive reference minimizer over a box, usable up
//! to three dimensions; the corpus fixture records its output so tests can
//! hold solver results against an independently computed optimum.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

/// Branch values within this tolerance of the best one count as active.
/// Scaled by `1 + |f(x)|` when applied.
pub const ACTIVE_BRANCH_TOL: f64 = 1e-12;

/// Nonsmooth objective as seen by the bundle method.
pub trait NonsmoothProblem {
    fn dimension(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    /// Any Clarke subgradient at `x`. Implementations here return the uniform
    /// average of active branch gradients, which is deterministic and lies in
    /// the convex hull.
    fn clarke_subgradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// A subgradient attaining the generalized directional derivative along
    /// `d`, i.e. maximizing `g^T d` over the subdifferential. Implementations
    /// that cannot provide one fall back to [`Self::clarke_subgradient`],
    /// which weakens the standard oracle but keeps the method running.
    fn attaining_subgradient(&self, x: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let _ = d;
        self.clarke_subgradient(x)
    }

    /// Curvature matrix at `x`, when the problem can supply one. `None` means
    /// the caller should use a zero matrix.
    fn curvature(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let _ = x;
        None
    }
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("grid oracle supports at most 3 dimensions, got {0}")]
    GridDimension(usize),
    #[error("grid resolution must be positive, got {0}")]
    GridResolution(f64),
    #[error("box is empty in coordinate {0}")]
    EmptyBox(usize),
    #[error("instance has no branches")]
    NoBranches,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown corpus id {0:?}")]
    UnknownInstance(String),
    #[error("corpus fixture is invalid: {0}")]
    BadFixture(String),
}

/// One quadratic branch `1/2 x^T H x + p^T x + r` with dense symmetric `H`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticBranch {
    pub h: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub r: f64,
}

impl QuadraticBranch {
    pub fn dimension(&self) -> usize {
        self.p.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut v = self.r;
        for i in 0..n {
            v += self.p[i] * x[i];
            let row = &self.h[i];
            let mut hx = 0.0;
            for j in 0..n {
                hx += row[j] * x[j];
            }
            v += 0.5 * x[i] * hx;
        }
        v
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let n = x.len();
        let mut g = DVector::zeros(n);
        for i in 0..n {
            let row = &self.h[i];
            let mut hx = 0.0;
            for j in 0..n {
                hx += row[j] * x[j];
            }
            g[i] = hx + self.p[i];
        }
        g
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        let n = self.dimension();
        DMatrix::from_fn(n, n, |i, j| self.h[i][j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    Min,
    Max,
}

/// Axis-aligned box, also usable as linear constraints for the solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lower[i] - 1e-12 && v <= self.upper[i] + 1e-12)
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }
}

/// Min or max of quadratic branches over a box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseInstance {
    pub combiner: Combiner,
    #[serde(rename = "branch")]
    pub branches: Vec<QuadraticBranch>,
    #[serde(rename = "box")]
    pub bounds: BoxBounds,
}

/// Value and set of active branches at `x`.
pub fn eval_piecewise(instance: &PiecewiseInstance, x: &[f64]) -> (f64, Vec<usize>) {
    let vals: Vec<f64> = instance.branches.iter().map(|b| b.value(x)).collect();
    let best = match instance.combiner {
        Combiner::Min => vals.iter().cloned().fold(f64::INFINITY, f64::min),
        Combiner::Max => vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    };
    let tol = ACTIVE_BRANCH_TOL * (1.0 + best.abs());
    let active = vals
        .iter()
        .enumerate()
        .filter(|(_, &v)| (v - best).abs() <= tol)
        .map(|(i, _)| i)
        .collect();
    (best, active)
}

/// Among active branches, the gradient maximizing `g^T d`; ties resolve to
/// the branch with the lowest index. For both combiners the subdifferential
/// is the convex hull of active branch gradients, so the maximum over the
/// hull is attained at one of them.
pub fn attaining_subgradient_piecewise(
    instance: &PiecewiseInstance,
    x: &[f64],
    d: &DVector<f64>,
) -> DVector<f64> {
    let (_, active) = eval_piecewise(instance, x);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for &i in &active {
        let g = instance.branches[i].gradient(x);
        let score = g.dot(d);
        match &best {
            Some((s, _)) if score <= *s => {}
            _ => best = Some((score, g)),
        }
    }
    best.expect("at least one branch is active").1
}

impl NonsmoothProblem for PiecewiseInstance {
    fn dimension(&self) -> usize {
        self.bounds.dimension()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        eval_piecewise(self, x.as_slice()).0
    }

    fn clarke_subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (_, active) = eval_piecewise(self, x.as_slice());
        let mut g = DVector::zeros(self.dimension());
        for &i in &active {
            g += self.branches[i].gradient(x.as_slice());
        }
        g / active.len() as f64
    }

    fn attaining_subgradient(&self, x: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        attaining_subgradient_piecewise(self, x.as_slice(), d)
    }

    /// Hessian of the first active branch, matching the curvature choice the
    /// delamination energy makes at kinks.
    fn curvature(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (_, active) = eval_piecewise(self, x.as_slice());
        Some(self.branches[active[0]].hessian())
    }
}

/// Scalar parabola piece `1/2 k u^2 + b u + c` of a min-structured term.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScalarPiece {
    pub k: f64,
    pub b: f64,
    pub c: f64,
}

impl ScalarPiece {
    pub fn value(&self, u: f64) -> f64 {
        0.5 * self.k * u * u + self.b * u + self.c
    }

    pub fn slope(&self, u: f64) -> f64 {
        self.k * u + self.b
    }
}

/// Value, active pieces, of `min_i piece_i(u)`.
pub fn eval_scalar_min(pieces: &[ScalarPiece], u: f64) -> (f64, Vec<usize>) {
    let vals: Vec<f64> = pieces.iter().map(|p| p.value(u)).collect();
    let best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = ACTIVE_BRANCH_TOL * (1.0 + best.abs());
    let active = vals
        .iter()
        .enumerate()
        .filter(|(_, &v)| (v - best).abs() <= tol)
        .map(|(i, _)| i)
        .collect();
    (best, active)
}

/// One separable nonsmooth term `weight * min_i piece_i(x[coordinate])`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordinateTerm {
    pub coordinate: usize,
    pub weight: f64,
    #[serde(rename = "piece")]
    pub pieces: Vec<ScalarPiece>,
}

/// Smooth quadratic plus weighted separable min-structured terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositeInstance {
    pub smooth: QuadraticBranch,
    #[serde(rename = "term")]
    pub terms: Vec<CoordinateTerm>,
    #[serde(rename = "box")]
    pub bounds: BoxBounds,
}

impl CompositeInstance {
    fn value_slice(&self, x: &[f64]) -> f64 {
        let mut v = self.smooth.value(x);
        for t in &self.terms {
            v += t.weight * eval_scalar_min(&t.pieces, x[t.coordinate]).0;
        }
        v
    }
}

impl NonsmoothProblem for CompositeInstance {
    fn dimension(&self) -> usize {
        self.bounds.dimension()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.value_slice(x.as_slice())
    }

    fn clarke_subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.smooth.gradient(x.as_slice());
        for t in &self.terms {
            let u = x[t.coordinate];
            let (_, active) = eval_scalar_min(&t.pieces, u);
            let avg: f64 =
                active.iter().map(|&i| t.pieces[i].slope(u)).sum::<f64>() / active.len() as f64;
            g[t.coordinate] += t.weight * avg;
        }
        g
    }

    fn attaining_subgradient(&self, x: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let mut g = self.smooth.gradient(x.as_slice());
        for t in &self.terms {
            let u = x[t.coordinate];
            let dir = d[t.coordinate];
            let (_, active) = eval_scalar_min(&t.pieces, u);
            // max of slope * dir over active pieces, first piece on ties
            let mut best = f64::NEG_INFINITY;
            let mut best_slope = 0.0;
            for &i in &active {
                let s = t.pieces[i].slope(u);
                if s * dir > best {
                    best = s * dir;
                    best_slope = s;
                }
            }
            g[t.coordinate] += t.weight * best_slope;
        }
        g
    }

    fn curvature(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut q = self.smooth.hessian();
        for t in &self.terms {
            let (_, active) = eval_scalar_min(&t.pieces, x[t.coordinate]);
            q[(t.coordinate, t.coordinate)] += t.weight * t.pieces[active[0]].k;
        }
        Some(q)
    }
}

/// Exhaustive minimization over a regular grid on the box. The reported value
/// is within `resolution * L` of the true box minimum, `L` a Lipschitz bound
/// of the objective on the box. Refuses more than three dimensions.
pub fn grid_oracle<F>(
    value: F,
    bounds: &BoxBounds,
    resolution: f64,
) -> Result<(DVector<f64>, f64), ProblemError>
where
    F: Fn(&[f64]) -> f64,
{
    let n = bounds.dimension();
    if n == 0 || n > 3 {
        return Err(ProblemError::GridDimension(n));
    }
    if resolution <= 0.0 || resolution.is_nan() {
        return Err(ProblemError::GridResolution(resolution));
    }
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let span = bounds.upper[i] - bounds.lower[i];
        if span < 0.0 {
            return Err(ProblemError::EmptyBox(i));
        }
        steps.push((span / resolution).round() as usize);
    }
    let coord = |i: usize, k: usize| -> f64 {
        if steps[i] == 0 {
            bounds.lower[i]
        } else {
            bounds.lower[i]
                + (bounds.upper[i] - bounds.lower[i]) * (k as f64) / (steps[i] as f64)
        }
    };
    let mut best_v = f64::INFINITY;
    let mut best_x = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut idx = vec![0usize; n];
    loop {
        for i in 0..n {
            x[i] = coord(i, idx[i]);
        }
        let v = value(&x);
        if v < best_v {
            best_v = v;
            best_x.copy_from_slice(&x);
        }
        // odometer increment over the grid
        let mut carry = 0;
        loop {
            if idx[carry] < steps[carry] {
                idx[carry] += 1;
                break;
            }
            idx[carry] = 0;
            carry += 1;
            if carry == n {
                return Ok((DVector::from_row_slice(&best_x), best_v));
            }
        }
    }
}

/// A corpus problem is either a plain piecewise instance or a composite one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusProblem {
    Piecewise(PiecewiseInstance),
    Composite(CompositeInstance),
}

impl CorpusProblem {
    pub fn as_problem(&self) -> &dyn NonsmoothProblem {
        match self {
            CorpusProblem::Piecewise(p) => p,
            CorpusProblem::Composite(c) => c,
        }
    }

    pub fn bounds(&self) -> &BoxBounds {
        match self {
            CorpusProblem::Piecewise(p) => &p.bounds,
            CorpusProblem::Composite(c) => &c.bounds,
        }
    }

    pub fn value_slice(&self, x: &[f64]) -> f64 {
        match self {
            CorpusProblem::Piecewise(p) => eval_piecewise(p, x).0,
            CorpusProblem::Composite(c) => c.value_slice(x),
        }
    }

    /// Crude Lipschitz bound on the box: max over branches of
    /// `||H|| * max ||x|| + ||p||`, using the Frobenius norm.
    pub fn lipschitz_bound(&self) -> f64 {
        let bounds = self.bounds();
        let radius = bounds
            .lower
            .iter()
            .zip(&bounds.upper)
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        let branch_bound = |b: &QuadraticBranch| -> f64 {
            let hnorm = b
                .h
                .iter()
                .flat_map(|row| row.iter())
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            let pnorm = b.p.iter().map(|v| v * v).sum::<f64>().sqrt();
            hnorm * radius + pnorm
        };
        match self {
            CorpusProblem::Piecewise(p) => {
                p.branches.iter().map(branch_bound).fold(0.0, f64::max)
            }
            CorpusProblem::Composite(c) => {
                let mut l = branch_bound(&c.smooth);
                for t in &c.terms {
                    let coord_radius = c.bounds.lower[t.coordinate]
                        .abs()
                        .max(c.bounds.upper[t.coordinate].abs());
                    let piece_bound = t
                        .pieces
                        .iter()
                        .map(|p| p.k.abs() * coord_radius + p.b.abs())
                        .fold(0.0, f64::max);
                    l += t.weight.abs() * piece_bound;
                }
                l
            }
        }
    }
}

/// One corpus entry: the instance, a start point, and the frozen grid-oracle
/// optimum it is tested against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub description: String,
    pub start: Vec<f64>,
    pub optimum_value: f64,
    pub optimum_point: Vec<f64>,
    pub problem: CorpusProblem,
}

#[derive(Debug, Deserialize)]
struct CorpusFile {
    #[serde(rename = "instance")]
    instances: Vec<CorpusEntry>,
}

const CORPUS_TOML: &str = include_str!("../fixtures/corpus.toml");

/// The built-in instances, parsed once from the bundled fixture.
pub fn corpus() -> &'static [CorpusEntry] {
    static CORPUS: OnceLock<Vec<CorpusEntry>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let file: CorpusFile =
            toml::from_str(CORPUS_TOML).expect("bundled corpus fixture parses");
        for e in &file.instances {
            let n = e.problem.bounds().dimension();
            assert_eq!(e.start.len(), n, "corpus entry {} start has wrong dimension", e.id);
            assert!(
                e.problem.bounds().contains(&e.start),
                "corpus entry {} starts outside its box",
                e.id
            );
        }
        file.instances
    })
}

pub fn corpus_entry(id: &str) -> Result<&'static CorpusEntry, ProblemError> {
    corpus()
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| ProblemError::UnknownInstance(id.to_string()))
}
