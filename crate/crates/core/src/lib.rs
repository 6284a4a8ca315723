//! Conservative high-order finite elements on structured square meshes.
//!
//! Continuous `Q^r` elements (`r = 1, 2`) for `-div(Λ∇p) = q` on the unit
//! square, with one Lagrange multiplier per vertex-centred control volume
//! enforcing discrete mass conservation. For `r = 1` the constrained
//! solution coincides with the classical vertex-centred finite volume
//! scheme.

pub mod analysis;
pub mod assembly;
pub mod elements;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod harness;
pub mod mesh;
pub mod problem;
pub mod solver;
pub mod space;
pub mod sparse;

pub use assembly::{assemble_system, SparseSystem};
pub use error::{Error, Result};
pub use exec::ExecutionMode;
pub use geometry::{Point, SymTensor2};
pub use mesh::{BoundaryKind, DualMesh, StructuredMesh};
pub use problem::{Conductivity, ExactSolution, Forcing, PointSource, ProblemSpec};
pub use solver::{solve_saddle, solve_unconstrained, Solution};
pub use space::FeSpace;
