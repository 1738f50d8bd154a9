//! Reference bases, quadrature, element maps and degree-of-freedom layouts.

pub mod basis;
pub mod element;
pub mod layout;
pub mod quadrature;

pub use basis::{dim_pk, edge_basis, ReferenceBasis};
pub use element::{element_values, AffineMap, CellValues, ElementValues, FacetValues};
pub use layout::{build_layout, Dof, Equation, SpaceLayout};
pub use quadrature::{edge_rule, quadrature_rule, EdgeRule, QuadratureRule};
