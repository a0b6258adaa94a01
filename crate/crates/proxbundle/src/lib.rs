//! Proximity-control bundle method for nonsmooth, nonconvex minimization.
//!
//! The solver keeps a working model built from cutting planes, augments it
//! with a fixed second-order term, and solves a small tangent program per
//! step. A proximity parameter grows on null steps and relaxes on serious
//! steps, so no linesearch is needed. Oracles for functions that are smooth
//! from below or from above differ in how planes are anchored; both live in
//! [`oracle`].
//!
//! A plane-stress delamination benchmark with a nonmonotone adhesive law is
//! included as the stress test for the upper-smooth oracle.

pub mod delamination;
pub mod driver;
pub mod model;
pub mod oracle;
pub mod problems;
pub mod qp;

pub use delamination::{AdhesiveLaw, BoundaryLayout, DelaminationModel, Mesh};
pub use driver::{
    solve, solve_observed, DriverError, DriverParams, InnerTrace, OuterRecord, RunHistory,
    StopReason,
};
pub use model::{ModelError, MultiplierSet, Plane, PlaneTag, WorkingModel};
pub use oracle::{DownshiftCoefficient, OracleConfig, OracleError, OracleVariant, PointData};
pub use problems::{
    grid_oracle, corpus, corpus_entry, BoxBounds, Combiner, CompositeInstance, CorpusEntry,
    CorpusProblem, NonsmoothProblem, PiecewiseInstance, ProblemError, QuadraticBranch,
    ScalarPiece,
};
pub use qp::{check_positive_definite, Polyhedron, QpError, TangentSolution, TangentSolver};
