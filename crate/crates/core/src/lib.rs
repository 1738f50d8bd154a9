//! Hybridizable discontinuous Galerkin discretizations of the Poisson, convection-diffusion-reaction,
//! Stokes and Oseen equations on triangular meshes, with static condensation, HDG projections,
//! discrete norms and inf-sup estimation.

pub mod analysis;
pub mod assembly;
pub mod cdr;
pub mod error;
pub mod fem;
pub mod fields;
pub mod mesh;
pub mod oseen;
pub mod poisson;
pub mod solver;
pub mod sparse;
pub mod stokes;

pub use assembly::{project_dirichlet, AssembledSystem};
pub use cdr::{assemble_cdr, CdrProblem};
pub use error::{HdgError, Result};
pub use fem::{build_layout, Dof, Equation, SpaceLayout};
pub use fields::{FacetField, ScalarField, TensorField, VectorField};
pub use mesh::{generate_lshape, generate_structured, refine_uniform, FacetTag, Mesh, Point};
pub use oseen::{assemble_oseen, OseenProblem};
pub use poisson::{assemble_poisson, PoissonProblem};
pub use solver::{condense, solve, solve_condensed, solve_monolithic, CondensedSystem, SolveReport};
pub use sparse::CsrMatrix;
pub use stokes::{assemble_stokes, StokesProblem, TensorStabilization};
