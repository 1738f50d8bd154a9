//! Coefficient and data fields evaluated pointwise.

use std::sync::Arc;

use crate::error::{HdgError, Result};
use crate::mesh::{Mesh, Point};

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
pub type TensorField = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

pub fn constant_scalar(v: f64) -> ScalarField {
    Arc::new(move |_| v)
}

pub fn constant_vector(v: [f64; 2]) -> VectorField {
    Arc::new(move |_| v)
}

pub fn constant_tensor(v: [[f64; 2]; 2]) -> TensorField {
    Arc::new(move |_| v)
}

pub fn identity_tensor() -> TensorField {
    constant_tensor([[1.0, 0.0], [0.0, 1.0]])
}

/// Piecewise-constant facet quantity such as the stabilization parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum FacetField {
    Uniform(f64),
    PerFacet(Vec<f64>),
}

impl FacetField {
    pub fn value(&self, f: usize) -> f64 {
        match self {
            FacetField::Uniform(v) => *v,
            FacetField::PerFacet(v) => v[f],
        }
    }

    /// Smallest value over the facets of `mesh`.
    pub fn min(&self, mesh: &Mesh) -> f64 {
        (0..mesh.num_facets()).map(|f| self.value(f)).fold(f64::INFINITY, f64::min)
    }

    /// Fails with the first facet whose value is not strictly positive.
    pub fn check_positive(&self, mesh: &Mesh, name: &str) -> Result<()> {
        if let FacetField::PerFacet(v) = self {
            if v.len() != mesh.num_facets() {
                return Err(HdgError::Assembly(format!(
                    "{name} has {} facet values for {} facets",
                    v.len(),
                    mesh.num_facets()
                )));
            }
        }
        for f in 0..mesh.num_facets() {
            let v = self.value(f);
            if !(v > 0.0) {
                let m = mesh.facet_midpoint(f);
                return Err(HdgError::Assembly(format!(
                    "{name} = {v} is not positive on facet {f} (midpoint ({:.6}, {:.6}))",
                    m[0], m[1]
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of the `tau >= C h^{1/2}` check that the stability theory asks for.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub tau_min: f64,
    pub h: f64,
    /// Largest `C` with `tau_min >= C h^{1/2}`.
    pub c_tau: f64,
}

impl StabilityReport {
    pub fn new(tau_min: f64, h: f64) -> Self {
        StabilityReport { tau_min, h, c_tau: tau_min / h.sqrt() }
    }

    pub fn satisfies(&self, c: f64) -> bool {
        self.c_tau >= c
    }
}

pub(crate) fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn inv2(k: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
    [[k[1][1] / det, -k[0][1] / det], [-k[1][0] / det, k[0][0] / det]]
}

/// Central-difference divergence, used when a field has no analytic divergence.
pub fn fd_divergence(f: &VectorField, x: Point, h: f64) -> f64 {
    let dx = (f([x[0] + h, x[1]])[0] - f([x[0] - h, x[1]])[0]) / (2.0 * h);
    let dy = (f([x[0], x[1] + h])[1] - f([x[0], x[1] - h])[1]) / (2.0 * h);
    dx + dy
}
