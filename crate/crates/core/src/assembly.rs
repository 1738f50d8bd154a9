//! Global systems built from element contributions, with Dirichlet traces lifted to the right-hand side.

use rayon::prelude::*;

use crate::fem::{edge_rule, Dof, SpaceLayout};
use crate::fem::basis::edge_basis;
use crate::mesh::{Mesh, Point};
use crate::sparse::CsrMatrix;

/// Square system over the free unknowns of a layout.
///
/// Rows are test functions and columns trial functions. Columns of eliminated Dirichlet
/// trace coefficients are kept in `lift` so new boundary data only changes the right-hand side.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub layout: SpaceLayout,
    pub matrix: CsrMatrix,
    /// Right-hand side including the lifted Dirichlet data.
    pub rhs: Vec<f64>,
    /// Volume and Neumann loads only.
    pub load: Vec<f64>,
    /// `n_dofs x n_fixed` coupling to the eliminated trace coefficients.
    pub lift: CsrMatrix,
    pub dirichlet_values: Vec<f64>,
    pub symmetric: bool,
}

impl AssembledSystem {
    /// `-lift * g`: the right-hand side contribution of prescribed trace coefficients `g`.
    pub fn dirichlet_rhs(&self, g: &[f64]) -> Vec<f64> {
        self.lift.matvec(g).into_iter().map(|v| -v).collect()
    }

    /// Replaces the boundary data without touching the matrix.
    pub fn with_dirichlet(&self, g: Vec<f64>) -> AssembledSystem {
        let lifted = self.dirichlet_rhs(&g);
        let mut s = self.clone();
        s.rhs = self.load.iter().zip(&lifted).map(|(a, b)| a + b).collect();
        s.dirichlet_values = g;
        s
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.matvec(x).iter().zip(&self.rhs).map(|(a, b)| a - b).collect()
    }
}

/// Dense element matrix over an element's local unknowns.
#[derive(Clone, Debug)]
pub(crate) struct LocalSystem {
    pub dofs: Vec<Dof>,
    /// Row-major, rows are test functions.
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl LocalSystem {
    pub fn new(dofs: Vec<Dof>) -> Self {
        let n = dofs.len();
        LocalSystem { dofs, matrix: vec![0.0; n * n], rhs: vec![0.0; n] }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        let n = self.dofs.len();
        self.matrix[row * n + col] += v;
    }
}

/// Runs `kernel` on every cell in parallel and scatters in cell order.
pub(crate) fn assemble<F>(
    mesh: &Mesh,
    layout: &SpaceLayout,
    kernel: F,
    extra: Vec<(usize, usize, f64)>,
    dirichlet_values: Vec<f64>,
    symmetric: bool,
) -> AssembledSystem
where
    F: Fn(usize) -> LocalSystem + Sync,
{
    let locals: Vec<LocalSystem> = (0..mesh.num_cells()).into_par_iter().map(&kernel).collect();
    let n = layout.n_dofs;
    let mut triplets = Vec::new();
    let mut lift_triplets = Vec::new();
    let mut load = vec![0.0; n];
    for local in &locals {
        let nl = local.dofs.len();
        for (i, di) in local.dofs.iter().enumerate() {
            let Dof::Free(r) = *di else { continue };
            load[r] += local.rhs[i];
            for (j, dj) in local.dofs.iter().enumerate() {
                let v = local.matrix[i * nl + j];
                if v == 0.0 {
                    continue;
                }
                match *dj {
                    Dof::Free(c) => triplets.push((r, c, v)),
                    Dof::Fixed(c) => lift_triplets.push((r, c, v)),
                }
            }
        }
    }
    triplets.extend(extra);
    let matrix = CsrMatrix::from_triplets(n, n, &triplets);
    let lift = CsrMatrix::from_triplets(n, layout.n_fixed(), &lift_triplets);
    let mut sys = AssembledSystem {
        layout: layout.clone(),
        matrix,
        rhs: load.clone(),
        load,
        lift,
        dirichlet_values: vec![0.0; layout.n_fixed()],
        symmetric,
    };
    sys = sys.with_dirichlet(dirichlet_values);
    sys
}

/// Facet-wise `L^2` projection of boundary data onto the trace basis of every Dirichlet facet.
///
/// `g` returns the components of the datum; `components` must match the layout's trace components.
pub fn project_dirichlet(
    mesh: &Mesh,
    layout: &SpaceLayout,
    g: &(dyn Fn(Point) -> [f64; 2] + Sync),
) -> Vec<f64> {
    let mut out = vec![0.0; layout.n_fixed()];
    let k = layout.degree;
    let rule = edge_rule(2 * k + 4).expect("degree within range");
    let mut mu = vec![0.0; k + 1];
    for f in 0..mesh.num_facets() {
        if !layout.is_fixed_facet(f) {
            continue;
        }
        let [a, b] = mesh.facet_points(f);
        let len = mesh.facets[f].length;
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let gv = g(x);
            edge_basis(k, s, &mut mu);
            for comp in 0..layout.trace_components {
                for j in 0..=k {
                    if let Dof::Fixed(i) = layout.trace_dof(f, comp, j) {
                        // Trace basis is mu_j / sqrt(len); the quadrature weight carries len.
                        out[i] += w * len * gv[comp] * mu[j] / len.sqrt();
                    }
                }
            }
        }
    }
    out
}
