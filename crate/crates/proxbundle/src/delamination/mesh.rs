//! Structured triangulation of the delamination strip.
//!
//! The strip `(0, length) x (0, height)` is divided into `nx x ny` rectangles,
//! each split along its south-west to north-east diagonal. Boundary nodes
//! carry exactly one tag; where segments meet, the priority order
//! clamped > contact > loaded > free resolves the corner.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Role of a boundary node. Order is the corner-resolution priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    /// Homogeneous displacement condition.
    Clamped,
    /// Adhesive contact with the rigid obstacle underneath.
    Contact,
    /// Surface traction applied here.
    Loaded,
    /// Traction-free.
    Free,
}

/// Which parts of the rectangle boundary play which role. Spans are fractions
/// of the bottom edge measured from `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLayout {
    /// Bottom segment glued to the obstacle.
    pub contact_span: (f64, f64),
    /// Bottom segment held fixed.
    pub clamp_span: (f64, f64),
    /// Whether the right vertical edge is held fixed.
    pub clamp_right_edge: bool,
    /// Whether the left vertical edge carries the load.
    pub load_left_edge: bool,
}

impl Default for BoundaryLayout {
    /// Contact on the left 80% of the bottom, clamped on the remaining 20%
    /// and on the right edge, loaded on the left edge.
    fn default() -> Self {
        BoundaryLayout {
            contact_span: (0.0, 0.8),
            clamp_span: (0.8, 1.0),
            clamp_right_edge: true,
            load_left_edge: true,
        }
    }
}

impl BoundaryLayout {
    /// Contact along the whole bottom edge; only the right edge is clamped.
    pub fn full_bottom_contact() -> Self {
        BoundaryLayout {
            contact_span: (0.0, 1.0),
            clamp_span: (1.0, 1.0),
            clamp_right_edge: true,
            load_left_edge: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh dimensions must be positive, got {length} x {height}")]
    BadDimensions { length: f64, height: f64 },
    #[error("subdivision counts must be at least 1, got {nx} x {ny}")]
    BadSubdivision { nx: usize, ny: usize },
    #[error("span ({0}, {1}) is not inside [0, 1] in increasing order")]
    BadSpan(f64, f64),
    #[error("span endpoint at fraction {0} does not land on a mesh node")]
    SpanOffGrid(f64),
    #[error("no clamped boundary: the elastic energy would not be coercive")]
    NoClampedBoundary,
}

/// Node and element arrays plus per-node boundary tags.
#[derive(Debug, Clone)]
pub struct Mesh {
    length: f64,
    height: f64,
    nx: usize,
    ny: usize,
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    tags: Vec<Option<BoundaryTag>>,
    layout: BoundaryLayout,
}

fn check_span(span: (f64, f64)) -> Result<(), MeshError> {
    let (lo, hi) = span;
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi > 1.0 || lo > hi {
        return Err(MeshError::BadSpan(lo, hi));
    }
    Ok(())
}

/// Fractions are aligned when they land on a grid line of the bottom edge.
fn aligned_index(frac: f64, nx: usize) -> Result<usize, MeshError> {
    let scaled = frac * nx as f64;
    let nearest = scaled.round();
    if (scaled - nearest).abs() > 1e-9 * (1.0 + nx as f64) {
        return Err(MeshError::SpanOffGrid(frac));
    }
    Ok(nearest as usize)
}

impl Mesh {
    /// Builds the triangulation and tags every boundary node.
    pub fn build(
        length: f64,
        height: f64,
        nx: usize,
        ny: usize,
        layout: BoundaryLayout,
    ) -> Result<Self, MeshError> {
        if !(length > 0.0 && height > 0.0) || !length.is_finite() || !height.is_finite() {
            return Err(MeshError::BadDimensions { length, height });
        }
        if nx < 1 || ny < 1 {
            return Err(MeshError::BadSubdivision { nx, ny });
        }
        check_span(layout.contact_span)?;
        check_span(layout.clamp_span)?;
        let contact_lo = aligned_index(layout.contact_span.0, nx)?;
        let contact_hi = aligned_index(layout.contact_span.1, nx)?;
        let clamp_lo = aligned_index(layout.clamp_span.0, nx)?;
        let clamp_hi = aligned_index(layout.clamp_span.1, nx)?;

        let hx = length / nx as f64;
        let hy = height / ny as f64;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([i as f64 * hx, j as f64 * hy]);
            }
        }

        let mut triangles = Vec::with_capacity(2 * nx * ny);
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }

        let mut tags = vec![None; nodes.len()];
        let mut clamped_any = false;
        for j in 0..=ny {
            for i in 0..=nx {
                if i > 0 && i < nx && j > 0 && j < ny {
                    continue;
                }
                let bottom = j == 0;
                let clamped = (bottom && clamp_lo <= i && i <= clamp_hi && clamp_lo < clamp_hi)
                    || (layout.clamp_right_edge && i == nx);
                let tag = if clamped {
                    BoundaryTag::Clamped
                } else if bottom && contact_lo <= i && i <= contact_hi {
                    BoundaryTag::Contact
                } else if layout.load_left_edge && i == 0 {
                    BoundaryTag::Loaded
                } else {
                    BoundaryTag::Free
                };
                clamped_any |= tag == BoundaryTag::Clamped;
                tags[idx(i, j)] = Some(tag);
            }
        }
        if !clamped_any {
            return Err(MeshError::NoClampedBoundary);
        }

        Ok(Mesh { length, height, nx, ny, nodes, triangles, tags, layout })
    }

    /// The 40 x 4 grid on the 100 mm x 10 mm strip with the default layout.
    pub fn benchmark() -> Self {
        Mesh::build(100.0, 10.0, 40, 4, BoundaryLayout::default())
            .expect("benchmark mesh parameters are valid")
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn layout(&self) -> &BoundaryLayout {
        &self.layout
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn tag(&self, node: usize) -> Option<BoundaryTag> {
        self.tags[node]
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Grid spacing along the bottom edge.
    pub fn spacing_x(&self) -> f64 {
        self.length / self.nx as f64
    }

    /// Grid spacing along the vertical edges.
    pub fn spacing_y(&self) -> f64 {
        self.height / self.ny as f64
    }

    /// Nodes on the closure of the contact segment with their trapezoidal
    /// quadrature weights. Weights sum to the segment length; the two
    /// segment endpoints carry half weight.
    pub fn contact_closure(&self) -> Vec<(usize, f64)> {
        let lo = aligned_index(self.layout.contact_span.0, self.nx)
            .expect("span alignment was validated at build time");
        let hi = aligned_index(self.layout.contact_span.1, self.nx)
            .expect("span alignment was validated at build time");
        if lo == hi {
            return Vec::new();
        }
        let h = self.spacing_x();
        (lo..=hi)
            .map(|i| {
                let w = if i == lo || i == hi { 0.5 * h } else { h };
                (self.node_index(i, 0), w)
            })
            .collect()
    }

    /// Contact-tagged nodes: the closure of the contact segment minus any
    /// node owned by the clamped boundary. These carry the unilateral
    /// constraint rows.
    pub fn contact_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&n| self.tags[n] == Some(BoundaryTag::Contact)).collect()
    }

    /// Edges of the loaded boundary as node pairs with their lengths.
    pub fn loaded_edges(&self) -> Vec<(usize, usize, f64)> {
        if !self.layout.load_left_edge {
            return Vec::new();
        }
        let hy = self.spacing_y();
        (0..self.ny).map(|j| (self.node_index(0, j), self.node_index(0, j + 1), hy)).collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.tags[node].is_some()
    }
}
