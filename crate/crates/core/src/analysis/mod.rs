//! Manufactured solutions, discrete norms, HDG projections, inf-sup estimation and convergence studies.

pub mod catalog;
pub mod infsup;
pub mod norms;
pub mod projection;
pub mod study;

pub use catalog::{case_by_name, case_names, catalog, Domain, ManufacturedCase, Regularity, Stabilization};
pub use infsup::{estimate_inf_sup, inf_sup_matrices, InfSupEstimate, InfSupMethod, INF_SUP_DIMENSION_CAP};
pub use norms::{Block, NormEvaluator, NormKind, NormParts};
pub use projection::{facet_l2_project, hdg_project_poisson, hdg_project_stokes, poisson_orthogonality, Projection, TraceProjection};
pub use study::{
    error_names, project_case, run_convergence_study, solution_errors, verify_error_bound, BoundCheck, BoundReport,
    LevelResult, StudyOptions, StudyReport,
};
