//! Plane-stress linear elasticity on the triangulated strip.
//!
//! Constant-strain triangles, so the element matrices are exact integrals.
//! Units are mm, N and MPa throughout; the assembled stiffness is N/mm and
//! load vectors are N.

use super::mesh::Mesh;
use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Material and thickness data for the strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElasticityParams {
    /// Young modulus in N/mm^2.
    pub young_modulus: f64,
    /// Poisson ratio, in (0, 0.5) for plane stress.
    pub poisson_ratio: f64,
    /// Out-of-plane thickness in mm.
    pub thickness: f64,
}

impl Default for ElasticityParams {
    fn default() -> Self {
        ElasticityParams { young_modulus: 210_000.0, poisson_ratio: 0.3, thickness: 5.0 }
    }
}

#[derive(Debug, Error)]
pub enum ElasticityError {
    #[error("young modulus must be positive, got {0}")]
    BadModulus(f64),
    #[error("poisson ratio must lie in (0, 0.5), got {0}")]
    BadPoissonRatio(f64),
    #[error("thickness must be positive, got {0}")]
    BadThickness(f64),
    #[error("triangle {index} is degenerate (doubled area {doubled_area})")]
    DegenerateTriangle { index: usize, doubled_area: f64 },
}

impl ElasticityParams {
    pub fn validate(&self) -> Result<(), ElasticityError> {
        if self.young_modulus <= 0.0 || !self.young_modulus.is_finite() {
            return Err(ElasticityError::BadModulus(self.young_modulus));
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(ElasticityError::BadPoissonRatio(self.poisson_ratio));
        }
        if self.thickness <= 0.0 || !self.thickness.is_finite() {
            return Err(ElasticityError::BadThickness(self.thickness));
        }
        Ok(())
    }
}

/// Plane-stress constitutive matrix in Voigt order (xx, yy, xy).
pub fn constitutive_matrix(params: &ElasticityParams) -> SMatrix<f64, 3, 3> {
    let e = params.young_modulus;
    let nu = params.poisson_ratio;
    let f = e / (1.0 - nu * nu);
    SMatrix::<f64, 3, 3>::new(f, f * nu, 0.0, f * nu, f, 0.0, 0.0, 0.0, f * (1.0 - nu) / 2.0)
}

/// Element stiffness of a constant-strain triangle with the given corner
/// coordinates, ordered counterclockwise. Dof order is (u1x, u1y, ..., u3y).
pub fn element_stiffness(
    coords: &[[f64; 2]; 3],
    params: &ElasticityParams,
    index: usize,
) -> Result<SMatrix<f64, 6, 6>, ElasticityError> {
    let [p1, p2, p3] = *coords;
    let doubled_area = (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p3[0] - p1[0]) * (p2[1] - p1[1]);
    let scale = coords.iter().flat_map(|p| p.iter()).fold(1.0f64, |m, &c| m.max(c.abs()));
    if doubled_area <= 1e-12 * scale * scale {
        return Err(ElasticityError::DegenerateTriangle { index, doubled_area });
    }

    let b = [p2[1] - p3[1], p3[1] - p1[1], p1[1] - p2[1]];
    let c = [p3[0] - p2[0], p1[0] - p3[0], p2[0] - p1[0]];
    let mut strain = SMatrix::<f64, 3, 6>::zeros();
    for n in 0..3 {
        strain[(0, 2 * n)] = b[n] / doubled_area;
        strain[(1, 2 * n + 1)] = c[n] / doubled_area;
        strain[(2, 2 * n)] = c[n] / doubled_area;
        strain[(2, 2 * n + 1)] = b[n] / doubled_area;
    }

    let area = 0.5 * doubled_area;
    let ke = strain.transpose() * constitutive_matrix(params) * strain
        * (area * params.thickness);
    // Exact symmetry, so the assembled matrix is symmetric bitwise.
    Ok((ke + ke.transpose()) * 0.5)
}

/// Assembles the global stiffness. Dofs are interleaved: node n owns rows
/// 2n (horizontal) and 2n + 1 (vertical).
pub fn assemble_stiffness(
    mesh: &Mesh,
    params: &ElasticityParams,
) -> Result<DMatrix<f64>, ElasticityError> {
    params.validate()?;
    let n = 2 * mesh.nodes().len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for (index, tri) in mesh.triangles().iter().enumerate() {
        let coords = [
            mesh.nodes()[tri[0]],
            mesh.nodes()[tri[1]],
            mesh.nodes()[tri[2]],
        ];
        let ke = element_stiffness(&coords, params, index)?;
        for (local_row, &node_row) in tri.iter().enumerate() {
            for (local_col, &node_col) in tri.iter().enumerate() {
                for dr in 0..2 {
                    for dc in 0..2 {
                        k[(2 * node_row + dr, 2 * node_col + dc)] +=
                            ke[(2 * local_row + dr, 2 * local_col + dc)];
                    }
                }
            }
        }
    }
    Ok(k)
}

/// Vertical surface traction of magnitude `f2` (N/mm^2) on the loaded edges,
/// integrated with the edge trapezoidal rule: each edge endpoint receives
/// `f2 * thickness * length / 2`.
pub fn assemble_load(mesh: &Mesh, f2: f64, params: &ElasticityParams) -> DVector<f64> {
    let mut g = DVector::<f64>::zeros(2 * mesh.nodes().len());
    for (a, b, len) in mesh.loaded_edges() {
        let w = 0.5 * f2 * params.thickness * len;
        g[2 * a + 1] += w;
        g[2 * b + 1] += w;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delamination::mesh::BoundaryLayout;
    use approx::assert_relative_eq;

    fn unit_triangle() -> [[f64; 2]; 3] {
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    }

    #[test]
    fn constitutive_matrix_matches_the_plane_stress_formula() {
        let p = ElasticityParams { young_modulus: 91.0, poisson_ratio: 0.3, thickness: 1.0 };
        let c = constitutive_matrix(&p);
        assert_relative_eq!(c[(0, 0)], 100.0, epsilon = 1e-12);
        assert_relative_eq!(c[(0, 1)], 30.0, epsilon = 1e-12);
        assert_relative_eq!(c[(2, 2)], 35.0, epsilon = 1e-12);
        assert_relative_eq!(c[(0, 2)], 0.0);
    }

    #[test]
    fn element_energy_matches_uniform_strain() {
        // Poisson ratio ~ 0 decouples the axes: stretching x by eps stores
        // E eps^2 A t / 2.
        let p = ElasticityParams { young_modulus: 200.0, poisson_ratio: 1e-12, thickness: 3.0 };
        let ke = element_stiffness(&unit_triangle(), &p, 0).unwrap();
        let eps = 0.01;
        let u = nalgebra::SVector::<f64, 6>::from_column_slice(&[0.0, 0.0, eps, 0.0, 0.0, 0.0]);
        let energy = 0.5 * (u.transpose() * ke * u)[(0, 0)];
        assert_relative_eq!(energy, 0.5 * 200.0 * eps * eps * 0.5 * 3.0, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_triangles_are_rejected() {
        let flat = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(matches!(
            element_stiffness(&flat, &ElasticityParams::default(), 7),
            Err(ElasticityError::DegenerateTriangle { index: 7, .. })
        ));
    }

    #[test]
    fn assembled_stiffness_is_bitwise_symmetric() {
        let mesh = Mesh::benchmark();
        let k = assemble_stiffness(&mesh, &ElasticityParams::default()).unwrap();
        for i in 0..k.nrows() {
            for j in 0..i {
                assert_eq!(k[(i, j)], k[(j, i)], "asymmetry at ({i}, {j})");
            }
        }
    }

    #[test]
    fn assembly_is_deterministic() {
        let mesh = Mesh::benchmark();
        let p = ElasticityParams::default();
        let a = assemble_stiffness(&mesh, &p).unwrap();
        let b = assemble_stiffness(&mesh, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rigid_motions_are_in_the_nullspace() {
        let mesh = Mesh::build(10.0, 5.0, 4, 2, BoundaryLayout::full_bottom_contact()).unwrap();
        let k = assemble_stiffness(&mesh, &ElasticityParams::default()).unwrap();
        let n = mesh.nodes().len();
        let scale = k.amax();
        for mode in 0..3 {
            let mut r = DVector::<f64>::zeros(2 * n);
            for (node, p) in mesh.nodes().iter().enumerate() {
                let (ux, uy) = match mode {
                    0 => (1.0, 0.0),
                    1 => (0.0, 1.0),
                    _ => (-p[1], p[0]),
                };
                r[2 * node] = ux;
                r[2 * node + 1] = uy;
            }
            let residual = (&k * &r).amax();
            assert!(residual <= 1e-9 * scale * r.amax().max(1.0), "mode {mode}: {residual}");
        }
    }

    #[test]
    fn affine_fields_leave_interior_nodes_in_equilibrium() {
        let mesh = Mesh::build(2.0, 2.0, 2, 2, BoundaryLayout::full_bottom_contact()).unwrap();
        let k = assemble_stiffness(&mesh, &ElasticityParams::default()).unwrap();
        let mut u = DVector::<f64>::zeros(2 * mesh.nodes().len());
        for (node, p) in mesh.nodes().iter().enumerate() {
            u[2 * node] = 0.3 * p[0] - 0.1 * p[1];
            u[2 * node + 1] = 0.2 * p[0] + 0.4 * p[1];
        }
        let f = &k * &u;
        // The single interior node of the 2 x 2 grid.
        let center = mesh.node_index(1, 1);
        let scale = k.amax();
        assert!(f[2 * center].abs() <= 1e-10 * scale);
        assert!(f[2 * center + 1].abs() <= 1e-10 * scale);
    }

    #[test]
    fn load_vector_conserves_the_applied_force() {
        let mesh = Mesh::benchmark();
        let p = ElasticityParams::default();
        let g = assemble_load(&mesh, 1.0, &p);
        // F2 * |loaded edge| * thickness = 1 * 10 * 5.
        assert_relative_eq!(g.sum(), 50.0, epsilon = 1e-12);
        // Horizontal dofs stay untouched.
        for node in 0..mesh.nodes().len() {
            assert_eq!(g[2 * node], 0.0);
        }
        // Edge endpoints take half of an interior node's share.
        assert_relative_eq!(g[2 * mesh.node_index(0, 0) + 1], 6.25);
        assert_relative_eq!(g[2 * mesh.node_index(0, 2) + 1], 12.5);
        assert_eq!(assemble_load(&mesh, 0.0, &p).amax(), 0.0);
    }

    #[test]
    fn parameter_validation_rejects_nonphysical_values() {
        let ok = ElasticityParams::default();
        assert!(ok.validate().is_ok());
        assert!(ElasticityParams { young_modulus: -1.0, ..ok }.validate().is_err());
        assert!(ElasticityParams { poisson_ratio: 0.5, ..ok }.validate().is_err());
        assert!(ElasticityParams { thickness: 0.0, ..ok }.validate().is_err());
    }
}
