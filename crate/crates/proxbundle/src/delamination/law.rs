//! Nonmonotone adhesive law: a pointwise minimum of convex scalar pieces.
//!
//! The law value `j(u)` is the smallest of its branch potentials at the jump
//! opening `u`. Branch switches make `j` upper-C1: smooth from above, with
//! downward kinks where two branches cross. Slopes of active branches drive
//! the contact subgradients; the branch curvature `k` feeds the second-order
//! model term.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Relative tolerance for deciding that a branch attains the envelope.
pub const ACTIVE_BRANCH_TOL: f64 = 1e-12;

/// Scalar branch potential `j(u) = k u^2 / 2 + b u + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawPiece {
    pub k: f64,
    pub b: f64,
    pub c: f64,
}

impl LawPiece {
    pub fn value(&self, u: f64) -> f64 {
        0.5 * self.k * u * u + self.b * u + self.c
    }

    pub fn slope(&self, u: f64) -> f64 {
        self.k * u + self.b
    }
}

#[derive(Debug, Error)]
pub enum LawError {
    #[error("law needs at least one piece")]
    Empty,
    #[error("piece {index} has negative curvature {k}")]
    NonConvexPiece { index: usize, k: f64 },
    #[error("law has {count} linear pieces, exactly one is required")]
    LinearPieceCount { count: usize },
    #[error("piece {index} never attains the envelope on [{lo}, {hi}]")]
    RedundantPiece { index: usize, lo: f64, hi: f64 },
    #[error("working range [{lo}, {hi}] is empty or not finite")]
    BadRange { lo: f64, hi: f64 },
    #[error("non-finite coefficient in piece {index}")]
    NonFinite { index: usize },
    #[error("failed to read law file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse law file: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Deserialize)]
struct LawFile {
    range: [f64; 2],
    #[serde(rename = "piece")]
    pieces: Vec<LawPiece>,
}

/// Validated min-of-pieces law together with its working range.
#[derive(Debug, Clone)]
pub struct AdhesiveLaw {
    pieces: Vec<LawPiece>,
    range: (f64, f64),
}

impl AdhesiveLaw {
    /// Validates convexity of every quadratic piece, the single-linear-piece
    /// rule, and that each piece attains the envelope somewhere on the
    /// working range (a sampled check).
    pub fn new(pieces: Vec<LawPiece>, range: (f64, f64)) -> Result<Self, LawError> {
        if pieces.is_empty() {
            return Err(LawError::Empty);
        }
        let (lo, hi) = range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(LawError::BadRange { lo, hi });
        }
        let mut linear = 0usize;
        for (index, p) in pieces.iter().enumerate() {
            if !(p.k.is_finite() && p.b.is_finite() && p.c.is_finite()) {
                return Err(LawError::NonFinite { index });
            }
            if p.k < 0.0 {
                return Err(LawError::NonConvexPiece { index, k: p.k });
            }
            if p.k == 0.0 {
                linear += 1;
            }
        }
        if linear != 1 {
            return Err(LawError::LinearPieceCount { count: linear });
        }
        let law = AdhesiveLaw { pieces, range };
        let samples = 4096usize;
        let mut attained = vec![false; law.pieces.len()];
        for s in 0..=samples {
            let u = lo + (hi - lo) * (s as f64) / (samples as f64);
            let env = law.value(u);
            let tol = ACTIVE_BRANCH_TOL * (1.0 + env.abs());
            for (i, p) in law.pieces.iter().enumerate() {
                if p.value(u) - env <= tol {
                    attained[i] = true;
                }
            }
        }
        if let Some(index) = attained.iter().position(|&a| !a) {
            return Err(LawError::RedundantPiece { index, lo, hi });
        }
        Ok(law)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, LawError> {
        let file: LawFile = toml::from_str(text)?;
        AdhesiveLaw::new(file.pieces, (file.range[0], file.range[1]))
    }

    pub fn from_path(path: &Path) -> Result<Self, LawError> {
        AdhesiveLaw::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// The law shipped with the delamination benchmark.
    pub fn benchmark() -> Self {
        AdhesiveLaw::from_toml_str(include_str!("../../fixtures/adhesive_law.toml"))
            .expect("embedded law fixture is valid")
    }

    /// A law that is identically zero; the contact term vanishes and the
    /// energy reduces to linear elasticity.
    pub fn zero() -> Self {
        AdhesiveLaw::new(vec![LawPiece { k: 0.0, b: 0.0, c: 0.0 }], (-1.0, 1.0))
            .expect("zero law is valid")
    }

    pub fn pieces(&self) -> &[LawPiece] {
        &self.pieces
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    /// Envelope value `min_i j_i(u)`.
    pub fn value(&self, u: f64) -> f64 {
        self.pieces.iter().map(|p| p.value(u)).fold(f64::INFINITY, f64::min)
    }

    /// Indices of the pieces attaining the envelope at `u`.
    pub fn active_branches(&self, u: f64) -> Vec<usize> {
        let env = self.value(u);
        let tol = ACTIVE_BRANCH_TOL * (1.0 + env.abs());
        (0..self.pieces.len()).filter(|&i| self.pieces[i].value(u) - env <= tol).collect()
    }

    /// Lowest-index active piece.
    pub fn first_active(&self, u: f64) -> usize {
        let env = self.value(u);
        let tol = ACTIVE_BRANCH_TOL * (1.0 + env.abs());
        (0..self.pieces.len())
            .find(|&i| self.pieces[i].value(u) - env <= tol)
            .expect("some piece attains the minimum")
    }

    /// Uniform average of the active-branch slopes (a Clarke element).
    pub fn averaged_slope(&self, u: f64) -> f64 {
        let active = self.active_branches(u);
        active.iter().map(|&i| self.pieces[i].slope(u)).sum::<f64>() / active.len() as f64
    }

    /// Slope of the active branch maximizing `slope * direction`; ties go to
    /// the first active branch. This attains the generalized directional
    /// derivative of the envelope along `direction`.
    pub fn attaining_slope(&self, u: f64, direction: f64) -> f64 {
        let active = self.active_branches(u);
        let mut best = self.pieces[active[0]].slope(u);
        let mut best_rate = best * direction;
        for &i in &active[1..] {
            let s = self.pieces[i].slope(u);
            if s * direction > best_rate {
                best_rate = s * direction;
                best = s;
            }
        }
        best
    }

    /// Branch curvature used in the second-order model: the `k` of the first
    /// active piece.
    pub fn active_curvature(&self, u: f64) -> f64 {
        self.pieces[self.first_active(u)].k
    }
}
