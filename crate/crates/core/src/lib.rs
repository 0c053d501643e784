//! H(div)-conforming velocity, H(curl)-conforming magnetic field and
//! discontinuous pressure discretization of the linearized MHD system on
//! tetrahedral meshes, with upwind and continuous-interior-penalty
//! stabilization.
//!
//! The usual entry point is [`harness::run_case`], which builds meshes,
//! assembles and solves the block system and reports errors and rates for a
//! manufactured solution.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod cases;
pub mod dofmap;
pub mod elements;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod interpolation;
pub mod mesh;
pub mod msh;
pub mod norms;
pub mod quadrature;
pub mod solver;
pub mod sparse;

pub use assembly::{Discretization, ProblemParams};
pub use cases::{case_by_name, ManufacturedCase};
pub use error::{FemError, Result};
pub use harness::{run_case, RunConfig, RunResult};
pub use mesh::{Mesh, Triangulation};
pub use norms::ErrorReport;
pub use solver::LuFactors;
