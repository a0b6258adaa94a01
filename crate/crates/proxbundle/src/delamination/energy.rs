//! Discrete delamination energy and its oracle.
//!
//! After eliminating the clamped dofs, the total energy of a displacement `v`
//! splits into a positive definite quadratic (elastic strain minus load work)
//! and a separable nonsmooth part: each contact node contributes its law
//! envelope at the vertical opening, weighted by the boundary quadrature and
//! the thickness. Subgradients and curvature come branchwise from the law.

use super::elasticity::{assemble_load, assemble_stiffness, ElasticityError, ElasticityParams};
use super::law::AdhesiveLaw;
use super::mesh::{BoundaryTag, Mesh};
use crate::problems::NonsmoothProblem;
use crate::qp::Polyhedron;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
    #[error("reduced stiffness is not positive definite")]
    NotPositiveDefinite,
    #[error("displacement has {got} entries, model has {expected} free dofs")]
    DimensionMismatch { expected: usize, got: usize },
}

/// One quadrature node of the contact boundary.
#[derive(Debug, Clone, Copy)]
pub struct ContactPoint {
    /// Mesh node index.
    pub node: usize,
    /// Quadrature weight in mm of boundary length.
    pub weight: f64,
    /// Reduced index of the vertical dof; `None` when the node is clamped.
    pub dof: Option<usize>,
}

/// Traction balance at a contact node, for cross-checking a solution.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Reaction {
    pub node: usize,
    /// Vertical opening in mm.
    pub opening: f64,
    /// Traction recovered from the force balance, N/mm^2.
    pub traction_from_balance: f64,
    /// Slope of the law envelope at the opening, N/mm^2.
    pub traction_from_law: f64,
}

/// Assembled, Dirichlet-reduced delamination problem.
#[derive(Debug, Clone)]
pub struct DelaminationModel {
    mesh: Mesh,
    params: ElasticityParams,
    law: AdhesiveLaw,
    stiffness: DMatrix<f64>,
    /// Load vector for a unit surface traction; scaled by `f2` at use.
    load: DVector<f64>,
    contact: Vec<ContactPoint>,
    reduced_to_full: Vec<usize>,
    full_to_reduced: Vec<Option<usize>>,
    /// Law energy of the clamped closure nodes, where the opening is pinned
    /// to zero.
    pinned_energy: f64,
}

impl DelaminationModel {
    pub fn build(
        mesh: Mesh,
        params: ElasticityParams,
        law: AdhesiveLaw,
    ) -> Result<Self, EnergyError> {
        let full_stiffness = assemble_stiffness(&mesh, &params)?;
        let full_load = assemble_load(&mesh, 1.0, &params);

        let n_nodes = mesh.nodes().len();
        let mut full_to_reduced = vec![None; 2 * n_nodes];
        let mut reduced_to_full = Vec::new();
        for node in 0..n_nodes {
            if mesh.tag(node) == Some(BoundaryTag::Clamped) {
                continue;
            }
            for dof in [2 * node, 2 * node + 1] {
                full_to_reduced[dof] = Some(reduced_to_full.len());
                reduced_to_full.push(dof);
            }
        }

        let n = reduced_to_full.len();
        let mut stiffness = DMatrix::<f64>::zeros(n, n);
        for (r, &fr) in reduced_to_full.iter().enumerate() {
            for (c, &fc) in reduced_to_full.iter().enumerate() {
                stiffness[(r, c)] = full_stiffness[(fr, fc)];
            }
        }
        if stiffness.clone().cholesky().is_none() {
            return Err(EnergyError::NotPositiveDefinite);
        }
        let mut load = DVector::<f64>::zeros(n);
        for (r, &fr) in reduced_to_full.iter().enumerate() {
            load[r] = full_load[fr];
        }

        let thickness = params.thickness;
        let mut pinned_energy = 0.0;
        let contact = mesh
            .contact_closure()
            .into_iter()
            .map(|(node, weight)| {
                let dof = full_to_reduced[2 * node + 1];
                if dof.is_none() {
                    pinned_energy += weight * thickness * law.value(0.0);
                }
                ContactPoint { node, weight, dof }
            })
            .collect();

        Ok(DelaminationModel {
            mesh,
            params,
            law,
            stiffness,
            load,
            contact,
            reduced_to_full,
            full_to_reduced,
            pinned_energy,
        })
    }

    /// The 40 x 4 strip with default material data and the shipped law.
    pub fn benchmark() -> Self {
        DelaminationModel::build(
            Mesh::benchmark(),
            ElasticityParams::default(),
            AdhesiveLaw::benchmark(),
        )
        .expect("benchmark model assembles")
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn elasticity(&self) -> &ElasticityParams {
        &self.params
    }

    pub fn law(&self) -> &AdhesiveLaw {
        &self.law
    }

    /// Number of free dofs after the Dirichlet elimination.
    pub fn dimension(&self) -> usize {
        self.reduced_to_full.len()
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    /// Unit-traction load vector on the free dofs.
    pub fn unit_load(&self) -> &DVector<f64> {
        &self.load
    }

    pub fn contact_points(&self) -> &[ContactPoint] {
        &self.contact
    }

    /// Reduced index of a node's vertical dof, unless the node is clamped.
    pub fn vertical_dof(&self, node: usize) -> Option<usize> {
        self.full_to_reduced[2 * node + 1]
    }

    /// Vertical dof of the bottom-left corner, the delamination tip.
    pub fn tip_dof(&self) -> Option<usize> {
        self.vertical_dof(self.mesh.node_index(0, 0))
    }

    /// The energy at a fixed load level, ready for the solver.
    pub fn energy(&self, f2: f64) -> DelaminationEnergy<'_> {
        DelaminationEnergy { model: self, f2 }
    }

    /// Non-penetration rows `-v2(node) <= 0` for every unclamped node of the
    /// contact closure.
    pub fn contact_constraints(&self) -> Polyhedron {
        let rows: Vec<usize> = self.contact.iter().filter_map(|p| p.dof).collect();
        let mut a = DMatrix::<f64>::zeros(rows.len(), self.dimension());
        for (r, &dof) in rows.iter().enumerate() {
            a[(r, dof)] = -1.0;
        }
        let b = DVector::<f64>::zeros(rows.len());
        Polyhedron::new(a, b).expect("constraint shapes agree by construction")
    }

    /// Expands a reduced displacement to all mesh dofs, zeros on the clamped
    /// ones.
    pub fn expand(&self, v: &DVector<f64>) -> Result<DVector<f64>, EnergyError> {
        self.check_dimension(v)?;
        let mut full = DVector::<f64>::zeros(2 * self.mesh.nodes().len());
        for (r, &fr) in self.reduced_to_full.iter().enumerate() {
            full[fr] = v[r];
        }
        Ok(full)
    }

    /// Recovers the contact tractions of a solution from the force balance
    /// and pairs them with the law-side slope. At nodes where the
    /// non-penetration constraint is inactive and the envelope is smooth, the
    /// two must agree; an active constraint adds its own reaction and breaks
    /// the identity.
    pub fn reactions(&self, v: &DVector<f64>, f2: f64) -> Result<Vec<Reaction>, EnergyError> {
        self.check_dimension(v)?;
        let residual = &self.stiffness * v - &self.load * f2;
        Ok(self
            .contact
            .iter()
            .filter_map(|p| {
                let dof = p.dof?;
                let opening = v[dof];
                Some(Reaction {
                    node: p.node,
                    opening,
                    traction_from_balance: -residual[dof]
                        / (p.weight * self.params.thickness),
                    traction_from_law: self.law.averaged_slope(opening),
                })
            })
            .collect())
    }

    /// Driver parameters sized for this problem: the curvature clip must not
    /// bite on the elastic stiffness, and the tau cap sits well above it.
    pub fn suggested_driver_params(&self) -> crate::driver::DriverParams {
        let gersh = (0..self.dimension())
            .map(|r| self.stiffness.row(r).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let law_k = self
            .law
            .pieces()
            .iter()
            .map(|p| p.k)
            .fold(0.0f64, f64::max);
        let law_gersh = self
            .contact
            .iter()
            .map(|p| p.weight * self.params.thickness * law_k)
            .fold(0.0f64, f64::max);
        let bound = 10.0 * (gersh + law_gersh);
        crate::driver::DriverParams {
            curvature_bound: bound,
            memory_cap: 1e4 * bound,
            ..Default::default()
        }
    }

    fn check_dimension(&self, v: &DVector<f64>) -> Result<(), EnergyError> {
        if v.len() != self.dimension() {
            return Err(EnergyError::DimensionMismatch {
                expected: self.dimension(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// The model at a fixed load level `f2`, seen through the solver's oracle
/// interface.
#[derive(Debug, Clone, Copy)]
pub struct DelaminationEnergy<'a> {
    model: &'a DelaminationModel,
    f2: f64,
}

impl DelaminationEnergy<'_> {
    pub fn load_level(&self) -> f64 {
        self.f2
    }

    fn quadratic_gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.model.stiffness * v - &self.model.load * self.f2
    }
}

impl NonsmoothProblem for DelaminationEnergy<'_> {
    fn dimension(&self) -> usize {
        self.model.dimension()
    }

    fn value(&self, v: &DVector<f64>) -> f64 {
        let m = self.model;
        let elastic = 0.5 * (&m.stiffness * v).dot(v);
        let work = self.f2 * m.load.dot(v);
        let adhesive: f64 = m
            .contact
            .iter()
            .filter_map(|p| {
                p.dof.map(|dof| p.weight * m.params.thickness * m.law.value(v[dof]))
            })
            .sum();
        elastic - work + adhesive + m.pinned_energy
    }

    fn clarke_subgradient(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = self.model;
        let mut g = self.quadratic_gradient(v);
        for p in &m.contact {
            if let Some(dof) = p.dof {
                g[dof] += p.weight * m.params.thickness * m.law.averaged_slope(v[dof]);
            }
        }
        g
    }

    fn attaining_subgradient(&self, v: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let m = self.model;
        let mut g = self.quadratic_gradient(v);
        // The law part is separable: maximizing the directional rate picks
        // the branch per node against the node's own direction component.
        for p in &m.contact {
            if let Some(dof) = p.dof {
                g[dof] += p.weight * m.params.thickness * m.law.attaining_slope(v[dof], d[dof]);
            }
        }
        g
    }

    fn curvature(&self, v: &DVector<f64>) -> Option<DMatrix<f64>> {
        let m = self.model;
        let mut q = m.stiffness.clone();
        for p in &m.contact {
            if let Some(dof) = p.dof {
                q[(dof, dof)] += p.weight * m.params.thickness * m.law.active_curvature(v[dof]);
            }
        }
        Some(q)
    }
}
