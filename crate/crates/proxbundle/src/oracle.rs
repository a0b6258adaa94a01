//! Cutting-plane oracles used after null steps, and plane recycling across
//! serious steps.
//!
//! Three ways to produce a plane at a trial point `y` for the model anchored
//! at `x`:
//!
//! * standard: `m#(.) = f(x) + g^T (. - x)` with `g` a subgradient at `x`
//!   attaining the directional generalized derivative along `y - x`;
//! * downshift: the tangent `t(.) = f(y) + g_y^T (. - y)` lowered by
//!   `s = max(0, t(x) - f(x) + c ||y - x||^2)` so its offset at `x` stays
//!   at least `c ||y - x||^2` below `f(x)`;
//! * modified: whichever of the two is larger at `y`, the downshifted tangent
//!   winning ties.
//!
//! Recycling moves a plane from the old serious point to the new one by the
//! same downshift rule, and keeps it only when it still carries more
//! information near the old point than a fresh exactness plane would.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Plane, PlaneTag};
use crate::problems::NonsmoothProblem;

/// Which plane the descent loop feeds into the model after a null step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleVariant {
    Standard,
    Downshift,
    Modified,
}

/// Downshift coefficient `c`. `Scaled` resolves once per solve to
/// `1e-2 * (1 + |f(x1)|) / (1 + ||x1||^2)` at the start point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownshiftCoefficient {
    Scaled,
    Fixed(f64),
}

pub const SCALED_DOWNSHIFT_FACTOR: f64 = 1e-2;

impl DownshiftCoefficient {
    pub fn resolve(&self, f_start: f64, start: &DVector<f64>) -> Result<f64, OracleError> {
        match *self {
            DownshiftCoefficient::Scaled => {
                Ok(SCALED_DOWNSHIFT_FACTOR * (1.0 + f_start.abs()) / (1.0 + start.norm_squared()))
            }
            DownshiftCoefficient::Fixed(c) => {
                if c > 0.0 && c.is_finite() {
                    Ok(c)
                } else {
                    Err(OracleError::NonPositiveCoefficient { c })
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub variant: OracleVariant,
    pub downshift: DownshiftCoefficient,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            variant: OracleVariant::Modified,
            downshift: DownshiftCoefficient::Scaled,
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("downshift coefficient must be positive and finite, got {c}")]
    NonPositiveCoefficient { c: f64 },
    #[error("points have mismatched dimensions {a} and {b}")]
    DimensionMismatch { a: usize, b: usize },
}

/// Everything the oracles need to know about the objective at one point.
///
/// `directional_subgradient` is the subgradient attaining the generalized
/// directional derivative along the direction supplied to [`PointData::gather`]
/// (any subgradient when the direction is zero or unspecified).
#[derive(Debug, Clone)]
pub struct PointData {
    pub point: DVector<f64>,
    pub value: f64,
    pub subgradient: DVector<f64>,
    pub directional_subgradient: DVector<f64>,
}

impl PointData {
    pub fn gather(
        problem: &dyn NonsmoothProblem,
        point: DVector<f64>,
        direction: Option<&DVector<f64>>,
    ) -> Self {
        let value = problem.value(&point);
        let subgradient = problem.clarke_subgradient(&point);
        let directional_subgradient = match direction {
            Some(d) => problem.attaining_subgradient(&point, d),
            None => subgradient.clone(),
        };
        PointData { point, value, subgradient, directional_subgradient }
    }

    /// Builds the record from precomputed quantities, avoiding a second
    /// objective evaluation when the value is already known.
    pub fn from_parts(
        point: DVector<f64>,
        value: f64,
        subgradient: DVector<f64>,
        directional_subgradient: DVector<f64>,
    ) -> Self {
        PointData { point, value, subgradient, directional_subgradient }
    }
}

/// Downshifted tangent plane at `y` for the model anchored at `x.point`.
///
/// The offset is `min(t(x), f(x) - c ||y - x||^2)` where `t` is the tangent of
/// the objective at `y`; it never exceeds `f(x)`.
pub fn downshift_plane(x: &PointData, y: &PointData, c: f64) -> Plane {
    let step = &y.point - &x.point;
    let tangent_at_x = y.value - y.subgradient.dot(&step);
    let shift = (tangent_at_x - x.value + c * step.norm_squared()).max(0.0);
    Plane::new(tangent_at_x - shift, y.subgradient.clone(), PlaneTag::Cutting, y.point.clone())
}

/// Standard plane: exact at `x` with the direction-attaining subgradient.
pub fn standard_plane(x: &PointData) -> Plane {
    Plane::new(x.value, x.directional_subgradient.clone(), PlaneTag::Cutting, x.point.clone())
}

/// Modified oracle: the pointwise larger of the downshifted tangent and the
/// standard plane at the trial point, the downshift winning ties.
pub fn modified_plane(x: &PointData, y: &PointData, c: f64) -> Plane {
    let down = downshift_plane(x, y, c);
    let standard = standard_plane(x);
    let down_at_y = down.value_at(&y.point, &x.point);
    let standard_at_y = standard.value_at(&y.point, &x.point);
    if down_at_y >= standard_at_y {
        down
    } else {
        standard
    }
}

/// Moves planes anchored at the old serious point to the new one.
///
/// Each plane is downshifted against the new point; it is kept only when its
/// shifted value at the old point is at least that of the exactness plane
/// `m0(.) = f(x_new) + g0^T (. - x_new)`, where `g0` must attain the
/// generalized directional derivative along `x_old - x_new` (pass that
/// direction to [`PointData::gather`] for `new`). Whenever at least one plane
/// fails the comparison, `m0` itself is appended once in its place.
pub fn recycle(
    planes: &[Plane],
    old_point: &DVector<f64>,
    new: &PointData,
    c: f64,
) -> Vec<Plane> {
    let step = &new.point - old_point;
    let step_sq = step.norm_squared();
    let exactness_at_old =
        new.value + new.directional_subgradient.dot(&(old_point - &new.point));
    let mut kept = Vec::with_capacity(planes.len());
    let mut dropped_any = false;
    for plane in planes {
        let value_at_new = plane.offset + plane.gradient.dot(&step);
        let shift = (value_at_new - new.value + c * step_sq).max(0.0);
        // Shifted plane evaluated back at the old point; the gradient terms
        // cancel, leaving the old offset minus the shift.
        let value_at_old = plane.offset - shift;
        if value_at_old >= exactness_at_old {
            kept.push(Plane::new(
                value_at_new - shift,
                plane.gradient.clone(),
                PlaneTag::Recycled,
                plane.origin.clone(),
            ));
        } else {
            dropped_any = true;
        }
    }
    if dropped_any {
        kept.push(Plane::new(
            new.value,
            new.directional_subgradient.clone(),
            PlaneTag::Exactness,
            new.point.clone(),
        ));
    }
    kept
}
