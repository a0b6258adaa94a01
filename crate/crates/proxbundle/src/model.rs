//! Polyhedral working model of a nonsmooth objective around a serious iterate.
//!
//! The first-order model is a finite max of affine planes anchored at the
//! serious point `x`,
//!
//! ```text
//! phi(y) = max_i { a_i + g_i^T (y - x) },
//! ```
//!
//! and the second-order model adds a fixed symmetric curvature term,
//!
//! ```text
//! Phi(y) = phi(y) + 1/2 (y - x)^T Q (y - x).
//! ```
//!
//! `Q` may be indefinite; it is chosen once per descent loop and never changes
//! while planes are added. Offsets are stored relative to the serious point
//! (`a_i` is the plane's value at `x`), so moving the model to a new serious
//! point is a pure offset shift. Every plane must satisfy `a_i <= f(x)`, and
//! the model always carries at least one plane.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Slack allowed when checking `a <= f(x)`, relative to `1 + |f(x)|`.
pub const OFFSET_SLACK: f64 = 1e-9;

/// Plane multipliers returned by the tangent program must sum to one within
/// this tolerance.
pub const MULTIPLIER_SUM_TOL: f64 = 1e-8;

/// Multipliers more negative than this are rejected as invalid duals.
pub const MULTIPLIER_SIGN_TOL: f64 = 1e-10;

/// Relative asymmetry above which a curvature matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// How a plane entered the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneTag {
    /// Tangent plane of the objective at the serious point itself.
    Exactness,
    /// Cutting plane produced by an oracle at a trial point.
    Cutting,
    /// Convex combination of planes weighted by tangent-program multipliers.
    Aggregate,
    /// Plane carried over from the previous serious point.
    Recycled,
}

/// One affine plane `y -> offset + gradient^T (y - x)`, anchored at the
/// serious point `x` of the model that owns it.
#[derive(Debug, Clone)]
pub struct Plane {
    /// Value of the plane at the serious point.
    pub offset: f64,
    pub gradient: DVector<f64>,
    pub tag: PlaneTag,
    /// Point whose oracle call generated the plane. Diagnostics only.
    pub origin: DVector<f64>,
}

impl Plane {
    pub fn new(offset: f64, gradient: DVector<f64>, tag: PlaneTag, origin: DVector<f64>) -> Self {
        Plane { offset, gradient, tag, origin }
    }

    /// Value of the plane at `y`, where `x` is the anchor of the owning model.
    pub fn value_at(&self, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let mut v = self.offset;
        for i in 0..x.len() {
            v += self.gradient[i] * (y[i] - x[i]);
        }
        v
    }
}

/// A plane stored in a model, together with its insertion sequence number.
/// Sequence numbers are unique within one model and grow monotonically, so
/// they double as plane age and as cache keys for the tangent solver.
#[derive(Debug, Clone)]
pub struct ModelPlane {
    pub plane: Plane,
    pub seq: u64,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: model has n = {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("curvature matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    AsymmetricCurvature { asymmetry: f64 },
    #[error("plane offset {offset:.6e} exceeds objective value {value:.6e} at the serious point")]
    OffsetAboveValue { offset: f64, value: f64 },
    #[error("plane budget {budget} cannot hold {protected} protected planes")]
    BudgetTooSmall { budget: usize, protected: usize },
    #[error("multiplier set invalid: {0}")]
    BadMultipliers(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

/// Multipliers of one tangent-program solution: a convex combination over the
/// model planes and nonnegative row multipliers for the linear constraints.
#[derive(Debug, Clone)]
pub struct MultiplierSet {
    plane: DVector<f64>,
    constraint: DVector<f64>,
}

impl MultiplierSet {
    pub fn new(plane: DVector<f64>, constraint: DVector<f64>) -> Result<Self, ModelError> {
        let sum: f64 = plane.iter().sum();
        if !sum.is_finite() {
            return Err(ModelError::NonFinite("plane multipliers"));
        }
        if (sum - 1.0).abs() > MULTIPLIER_SUM_TOL {
            return Err(ModelError::BadMultipliers(format!(
                "plane multipliers sum to {sum:.12}, expected 1"
            )));
        }
        if let Some(lo) = plane.iter().cloned().reduce(f64::min) {
            if lo < -MULTIPLIER_SIGN_TOL {
                return Err(ModelError::BadMultipliers(format!(
                    "negative plane multiplier {lo:.3e}"
                )));
            }
        }
        if let Some(lo) = constraint.iter().cloned().reduce(f64::min) {
            if lo < -MULTIPLIER_SIGN_TOL {
                return Err(ModelError::BadMultipliers(format!(
                    "negative constraint multiplier {lo:.3e}"
                )));
            }
        }
        Ok(MultiplierSet { plane, constraint })
    }

    pub fn plane_multipliers(&self) -> &DVector<f64> {
        &self.plane
    }

    pub fn constraint_multipliers(&self) -> &DVector<f64> {
        &self.constraint
    }
}

/// Working model: planes, anchor point, objective value there, and the fixed
/// curvature matrix of the current descent loop.
#[derive(Debug, Clone)]
pub struct WorkingModel {
    serious_point: DVector<f64>,
    value_at_point: f64,
    curvature: DMatrix<f64>,
    plane_budget: usize,
    entries: Vec<ModelPlane>,
    next_seq: u64,
    id: u64,
}

fn fresh_model_id() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static NEXT: AtomicU64 = AtomicU64::new(1);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

impl WorkingModel {
    /// Builds a model holding a single initial plane. The curvature matrix
    /// must be symmetric; the plane offset must not exceed `value_at_point`.
    pub fn new(
        serious_point: DVector<f64>,
        value_at_point: f64,
        curvature: DMatrix<f64>,
        plane_budget: usize,
        first_plane: Plane,
    ) -> Result<Self, ModelError> {
        let n = serious_point.len();
        if curvature.nrows() != n || curvature.ncols() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: curvature.nrows() });
        }
        let scale = curvature.amax().max(1.0);
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((curvature[(i, j)] - curvature[(j, i)]).abs());
            }
        }
        if asym > SYMMETRY_TOL * scale {
            return Err(ModelError::AsymmetricCurvature { asymmetry: asym });
        }
        if plane_budget == 0 {
            return Err(ModelError::BudgetTooSmall { budget: 0, protected: 1 });
        }
        if !value_at_point.is_finite() {
            return Err(ModelError::NonFinite("objective value at serious point"));
        }
        let mut model = WorkingModel {
            serious_point,
            value_at_point,
            curvature,
            plane_budget,
            entries: Vec::new(),
            next_seq: 0,
            id: fresh_model_id(),
        };
        model.push(first_plane)?;
        Ok(model)
    }

    pub fn serious_point(&self) -> &DVector<f64> {
        &self.serious_point
    }

    pub fn value_at_point(&self) -> f64 {
        self.value_at_point
    }

    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.curvature
    }

    pub fn plane_budget(&self) -> usize {
        self.plane_budget
    }

    pub fn planes(&self) -> &[ModelPlane] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.serious_point.len()
    }

    /// Identity of this model instance, used by the tangent solver to key its
    /// factorization and back-substitution caches.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Inserts a plane and returns its sequence number.
    pub fn push(&mut self, plane: Plane) -> Result<u64, ModelError> {
        let n = self.serious_point.len();
        if plane.gradient.len() != n {
            return Err(ModelError::DimensionMismatch { expected: n, got: plane.gradient.len() });
        }
        if !plane.offset.is_finite() || plane.gradient.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFinite("plane"));
        }
        if plane.offset > self.value_at_point + OFFSET_SLACK * (1.0 + self.value_at_point.abs()) {
            return Err(ModelError::OffsetAboveValue {
                offset: plane.offset,
                value: self.value_at_point,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.entries.push(ModelPlane { plane, seq });
        Ok(seq)
    }

    /// `phi(y)`: max over planes.
    pub fn eval_first_order(&self, y: &DVector<f64>) -> f64 {
        self.best_plane_at(y).1
    }

    /// `Phi(y) = phi(y) + 1/2 (y-x)^T Q (y-x)`.
    pub fn eval_second_order(&self, y: &DVector<f64>) -> f64 {
        let d = y - &self.serious_point;
        self.eval_first_order(y) + 0.5 * (&self.curvature * &d).dot(&d)
    }

    /// Index (into `planes()`) and value of the plane attaining the max at
    /// `y`. Ties resolve to the earliest inserted plane.
    pub fn best_plane_at(&self, y: &DVector<f64>) -> (usize, f64) {
        let x = &self.serious_point;
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (idx, e) in self.entries.iter().enumerate() {
            let v = e.plane.value_at(y, x);
            if v > best_v {
                best_v = v;
                best = idx;
            }
        }
        (best, best_v)
    }

    /// Convex combination of the model planes under the given multipliers.
    /// The result satisfies `m*(y) <= phi(y)` everywhere, with equality at the
    /// trial point the multipliers came from.
    pub fn aggregate_plane(
        &self,
        multipliers: &MultiplierSet,
        origin: &DVector<f64>,
    ) -> Result<Plane, ModelError> {
        let lambda = multipliers.plane_multipliers();
        if lambda.len() != self.entries.len() {
            return Err(ModelError::BadMultipliers(format!(
                "{} multipliers for {} planes",
                lambda.len(),
                self.entries.len()
            )));
        }
        let mut offset = 0.0;
        let mut gradient = DVector::zeros(self.dimension());
        for (e, &l) in self.entries.iter().zip(lambda.iter()) {
            if l != 0.0 {
                offset += l * e.plane.offset;
                gradient.axpy(l, &e.plane.gradient, 1.0);
            }
        }
        Ok(Plane::new(offset, gradient, PlaneTag::Aggregate, origin.clone()))
    }

    /// Drops oldest unprotected planes until the budget is met. Protected
    /// planes are named by sequence number and are never removed.
    pub fn prune(&mut self, protected: &[u64]) -> Result<(), ModelError> {
        if protected.len() > self.plane_budget {
            return Err(ModelError::BudgetTooSmall {
                budget: self.plane_budget,
                protected: protected.len(),
            });
        }
        while self.entries.len() > self.plane_budget {
            let victim = self
                .entries
                .iter()
                .position(|e| !protected.contains(&e.seq));
            match victim {
                // Entries are stored in insertion order, so the first
                // unprotected entry is the oldest one.
                Some(idx) => {
                    self.entries.remove(idx);
                }
                None => break,
            }
        }
        Ok(())
    }

    /// True if some plane reproduces the objective value at the serious point.
    pub fn has_exactness_plane(&self) -> bool {
        let tol = OFFSET_SLACK * (1.0 + self.value_at_point.abs());
        self.entries
            .iter()
            .any(|e| (e.plane.offset - self.value_at_point).abs() <= tol)
    }
}
