//! Delamination of an adhesively bonded elastic strip.
//!
//! A plane-stress strip is glued to a rigid obstacle along part of its bottom
//! edge. The glue follows a nonmonotone law: the boundary energy density is a
//! minimum of convex pieces, so peeling releases energy through downward
//! kinks. Together with the non-penetration constraint this produces the
//! nonsmooth, nonconvex benchmark problem solved by the bundle driver.

pub mod elasticity;
pub mod energy;
pub mod law;
pub mod mesh;

pub use elasticity::{assemble_load, assemble_stiffness, ElasticityError, ElasticityParams};
pub use energy::{ContactPoint, DelaminationEnergy, DelaminationModel, EnergyError, Reaction};
pub use law::{AdhesiveLaw, LawError, LawPiece};
pub use mesh::{BoundaryLayout, BoundaryTag, Mesh, MeshError};
