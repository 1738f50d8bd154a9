//! Affine cell maps and basis values at physical quadrature points.

use super::basis::{edge_basis, ReferenceBasis};
use super::quadrature::{EdgeRule, QuadratureRule};
use crate::mesh::{Mesh, Point};

#[derive(Clone, Copy, Debug)]
pub struct AffineMap {
    pub origin: Point,
    /// Columns are the edge vectors `v1 - v0` and `v2 - v0`.
    pub jac: [[f64; 2]; 2],
    pub inv: [[f64; 2]; 2],
    pub det: f64,
}

impl AffineMap {
    pub fn new(p: [Point; 3]) -> Self {
        let jac = [[p[1][0] - p[0][0], p[2][0] - p[0][0]], [p[1][1] - p[0][1], p[2][1] - p[0][1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        AffineMap { origin: p[0], jac, inv, det }
    }

    pub fn forward(&self, x: [f64; 2]) -> Point {
        [
            self.origin[0] + self.jac[0][0] * x[0] + self.jac[0][1] * x[1],
            self.origin[1] + self.jac[1][0] * x[0] + self.jac[1][1] * x[1],
        ]
    }

    pub fn inverse(&self, p: Point) -> [f64; 2] {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1]];
        [self.inv[0][0] * d[0] + self.inv[0][1] * d[1], self.inv[1][0] * d[0] + self.inv[1][1] * d[1]]
    }

    /// Physical gradient `J^{-T} g` of a reference gradient `g`.
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [self.inv[0][0] * g[0] + self.inv[1][0] * g[1], self.inv[0][1] * g[0] + self.inv[1][1] * g[1]]
    }
}

/// Cell basis scaled to be orthonormal on the physical cell, evaluated at physical quadrature points.
#[derive(Clone, Debug)]
pub struct CellValues {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub m: usize,
    /// `phi[q * m + i]`
    pub phi: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
}

impl CellValues {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn phi_at(&self, q: usize) -> &[f64] {
        &self.phi[q * self.m..(q + 1) * self.m]
    }

    pub fn grad_at(&self, q: usize) -> &[[f64; 2]] {
        &self.grad[q * self.m..(q + 1) * self.m]
    }
}

/// Cell basis and facet trace basis on one facet of a cell.
#[derive(Clone, Debug)]
pub struct FacetValues {
    pub facet: usize,
    pub normal: Point,
    pub length: f64,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub m: usize,
    pub nt: usize,
    pub phi: Vec<f64>,
    /// Trace basis, orthonormal on the facet, in the facet's own parametrization.
    pub mu: Vec<f64>,
}

impl FacetValues {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn phi_at(&self, q: usize) -> &[f64] {
        &self.phi[q * self.m..(q + 1) * self.m]
    }

    pub fn mu_at(&self, q: usize) -> &[f64] {
        &self.mu[q * self.nt..(q + 1) * self.nt]
    }
}

#[derive(Clone, Debug)]
pub struct ElementValues {
    pub cell: usize,
    pub map: AffineMap,
    pub area: f64,
    pub h: f64,
    pub volume: CellValues,
    pub facets: [FacetValues; 3],
}

pub fn cell_values(mesh: &Mesh, basis: &ReferenceBasis, c: usize, rule: &QuadratureRule) -> CellValues {
    let map = AffineMap::new(mesh.cell_points(c));
    let scale = 1.0 / map.det.abs().sqrt();
    let m = basis.len();
    let nq = rule.len();
    let mut phi = vec![0.0; nq * m];
    let mut grad = vec![[0.0; 2]; nq * m];
    let mut points = Vec::with_capacity(nq);
    let mut weights = Vec::with_capacity(nq);
    for (q, (x, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        points.push(map.forward(*x));
        weights.push(w * map.det.abs());
        basis.eval_into(*x, &mut phi[q * m..(q + 1) * m], &mut grad[q * m..(q + 1) * m]);
        for i in 0..m {
            phi[q * m + i] *= scale;
            let g = map.push_gradient(grad[q * m + i]);
            grad[q * m + i] = [g[0] * scale, g[1] * scale];
        }
    }
    CellValues { points, weights, m, phi, grad }
}

pub fn facet_values(
    mesh: &Mesh,
    basis: &ReferenceBasis,
    c: usize,
    local: usize,
    rule: &EdgeRule,
) -> FacetValues {
    let map = AffineMap::new(mesh.cell_points(c));
    let scale = 1.0 / map.det.abs().sqrt();
    let f = mesh.cell_facets[c][local].facet;
    let [a, b] = mesh.facet_points(f);
    let length = mesh.facets[f].length;
    let tscale = 1.0 / length.sqrt();
    let m = basis.len();
    let nt = basis.degree + 1;
    let nq = rule.len();
    let mut phi = vec![0.0; nq * m];
    let mut mu = vec![0.0; nq * nt];
    let mut grads = vec![[0.0; 2]; m];
    let mut points = Vec::with_capacity(nq);
    let mut weights = Vec::with_capacity(nq);
    for (q, (&s, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
        let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
        points.push(x);
        weights.push(w * length);
        basis.eval_into(map.inverse(x), &mut phi[q * m..(q + 1) * m], &mut grads);
        for v in &mut phi[q * m..(q + 1) * m] {
            *v *= scale;
        }
        edge_basis(basis.degree, s, &mut mu[q * nt..(q + 1) * nt]);
        for v in &mut mu[q * nt..(q + 1) * nt] {
            *v *= tscale;
        }
    }
    FacetValues { facet: f, normal: mesh.outward_normal(c, local), length, points, weights, m, nt, phi, mu }
}

pub fn element_values(
    mesh: &Mesh,
    basis: &ReferenceBasis,
    c: usize,
    cell_rule: &QuadratureRule,
    edge_rule: &EdgeRule,
) -> ElementValues {
    ElementValues {
        cell: c,
        map: AffineMap::new(mesh.cell_points(c)),
        area: mesh.cell_area(c),
        h: mesh.h_cell[c],
        volume: cell_values(mesh, basis, c, cell_rule),
        facets: [0, 1, 2].map(|i| facet_values(mesh, basis, c, i, edge_rule)),
    }
}

/// Values of the physical cell basis at an arbitrary point of cell `c`.
pub fn eval_cell_basis(mesh: &Mesh, basis: &ReferenceBasis, c: usize, x: Point) -> Vec<f64> {
    let map = AffineMap::new(mesh.cell_points(c));
    let (mut v, _) = basis.eval(map.inverse(x));
    let scale = 1.0 / map.det.abs().sqrt();
    for a in &mut v {
        *a *= scale;
    }
    v
}
