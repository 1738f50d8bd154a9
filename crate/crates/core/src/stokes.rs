//! HDG discretization of Stokes flow in the gradient-velocity-pressure form `sigma = nu grad u`.

use crate::assembly::{assemble, project_dirichlet, AssembledSystem, LocalSystem};
use crate::error::{HdgError, Result};
use crate::fem::{build_layout, edge_rule, element::cell_values, element_values, quadrature_rule, Equation, ReferenceBasis, SpaceLayout};
use crate::fields::{constant_vector, dot, FacetField, StabilityReport, VectorField};
use crate::mesh::{Mesh, Point};

/// `S = tau_n n (x) n + tau_t (I - n (x) n)` on each facet.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorStabilization {
    pub tau_n: FacetField,
    pub tau_t: FacetField,
}

impl TensorStabilization {
    pub fn uniform(tau_n: f64, tau_t: f64) -> Self {
        TensorStabilization { tau_n: FacetField::Uniform(tau_n), tau_t: FacetField::Uniform(tau_t) }
    }

    pub fn tensor(&self, f: usize, n: Point) -> [[f64; 2]; 2] {
        let (tn, tt) = (self.tau_n.value(f), self.tau_t.value(f));
        let mut s = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let id = if a == b { 1.0 } else { 0.0 };
                s[a][b] = tn * n[a] * n[b] + tt * (id - n[a] * n[b]);
            }
        }
        s
    }

    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        self.tau_n.check_positive(mesh, "tau_n")?;
        self.tau_t.check_positive(mesh, "tau_t")
    }

    pub fn tau_min(&self, mesh: &Mesh) -> f64 {
        self.tau_n.min(mesh).min(self.tau_t.min(mesh))
    }

    /// `max_K max(tau_t h_K, tau_n h_K)` over the facets of each cell.
    pub fn tau_bar(&self, mesh: &Mesh) -> f64 {
        let mut out = 0.0f64;
        for c in 0..mesh.num_cells() {
            for cf in &mesh.cell_facets[c] {
                let t = self.tau_n.value(cf.facet).max(self.tau_t.value(cf.facet));
                out = out.max(t * mesh.h_cell[c]);
            }
        }
        out
    }
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym2_eigenvalues(s: [[f64; 2]; 2]) -> [f64; 2] {
    let mean = 0.5 * (s[0][0] + s[1][1]);
    let d = 0.5 * (s[0][0] - s[1][1]);
    let r = (d * d + s[0][1] * s[1][0]).sqrt();
    [mean - r, mean + r]
}

#[derive(Clone)]
pub struct StokesProblem {
    pub nu: f64,
    pub f: VectorField,
    pub stab: TensorStabilization,
    /// Boundary velocity; no-slip by default.
    pub g: VectorField,
}

impl StokesProblem {
    pub fn new(nu: f64, f: VectorField) -> Self {
        StokesProblem { nu, f, stab: TensorStabilization::uniform(1.0, 1.0), g: constant_vector([0.0, 0.0]) }
    }

    pub fn check(&self, mesh: &Mesh) -> Result<StabilityReport> {
        if !(self.nu > 0.0) {
            return Err(HdgError::Assembly(format!("viscosity nu = {} is not positive", self.nu)));
        }
        self.stab.check(mesh)?;
        let r = StabilityReport::new(self.stab.tau_min(mesh), mesh.max_h());
        if !r.satisfies(1.0) {
            log::warn!("tau_min = {} is below h^(1/2) = {}", r.tau_min, r.h.sqrt());
        }
        Ok(r)
    }
}

pub(crate) struct FlowData<'a> {
    pub nu: f64,
    pub stab: &'a TensorStabilization,
    pub f: &'a VectorField,
    pub beta: Option<&'a VectorField>,
}

/// Element matrix of `B_S` (plus the convection terms of `B_O` when `beta` is given).
///
/// Local order: `sigma_xx, sigma_xy, sigma_yx, sigma_yy`, `u_x, u_y`, `p`, then traces of local facets
/// 0, 1, 2 with two components each.
pub(crate) fn flow_kernel(mesh: &Mesh, layout: &SpaceLayout, basis: &ReferenceBasis, data: &FlowData, c: usize) -> LocalSystem {
    let k = layout.degree;
    let m = layout.m;
    let nt = layout.nt;
    let ev = element_values(mesh, basis, c, &quadrature_rule(2 * k + 2).unwrap(), &edge_rule(2 * k + 2).unwrap());
    let mut ls = LocalSystem::new(layout.element_dofs(mesh, c));
    let sg = |a: usize, b: usize, i: usize| (2 * a + b) * m + i;
    let u = |a: usize, i: usize| (4 + a) * m + i;
    let p = |i: usize| 6 * m + i;
    let t = |l: usize, a: usize, j: usize| 7 * m + l * 2 * nt + a * nt + j;
    let nu_inv = 1.0 / data.nu;

    let vol = &ev.volume;
    for q in 0..vol.len() {
        let w = vol.weights[q];
        let phi = vol.phi_at(q);
        let grad = vol.grad_at(q);
        let beta = data.beta.map(|b| b(vol.points[q]));
        for i in 0..m {
            for j in 0..m {
                let pp = w * phi[i] * phi[j];
                for a in 0..2 {
                    for b in 0..2 {
                        ls.add(sg(a, b, i), sg(a, b, j), nu_inv * pp);
                        ls.add(sg(a, b, i), u(a, j), -w * grad[j][b] * phi[i]);
                        ls.add(u(a, j), sg(a, b, i), -w * grad[j][b] * phi[i]);
                    }
                    ls.add(u(a, i), p(j), w * grad[i][a] * phi[j]);
                    ls.add(p(j), u(a, i), w * grad[i][a] * phi[j]);
                }
                if let Some(b) = beta {
                    let bg = dot(b, grad[i]);
                    for a in 0..2 {
                        ls.add(u(a, i), u(a, j), w * phi[j] * bg);
                    }
                }
            }
        }
    }

    for (l, fv) in ev.facets.iter().enumerate() {
        let n = fv.normal;
        let s = data.stab.tensor(fv.facet, n);
        for q in 0..fv.len() {
            let w = fv.weights[q];
            let phi = fv.phi_at(q);
            let mu = fv.mu_at(q);
            for i in 0..m {
                for j in 0..m {
                    let pp = w * phi[i] * phi[j];
                    for a in 0..2 {
                        for b in 0..2 {
                            ls.add(sg(a, b, i), u(a, j), pp * n[b]);
                            ls.add(u(a, j), sg(a, b, i), pp * n[b]);
                            ls.add(u(a, i), u(b, j), -s[a][b] * pp);
                        }
                        ls.add(u(a, i), p(j), -pp * n[a]);
                        ls.add(p(j), u(a, i), -pp * n[a]);
                    }
                }
                for j in 0..nt {
                    let pm = w * phi[i] * mu[j];
                    for a in 0..2 {
                        for b in 0..2 {
                            ls.add(sg(a, b, i), t(l, a, j), -pm * n[b]);
                            ls.add(t(l, a, j), sg(a, b, i), -pm * n[b]);
                            ls.add(u(a, i), t(l, b, j), s[a][b] * pm);
                            ls.add(t(l, b, j), u(a, i), s[a][b] * pm);
                        }
                        ls.add(p(i), t(l, a, j), pm * n[a]);
                        ls.add(t(l, a, j), p(i), pm * n[a]);
                    }
                }
            }
            for i in 0..nt {
                for j in 0..nt {
                    let mm = w * mu[i] * mu[j];
                    for a in 0..2 {
                        for b in 0..2 {
                            ls.add(t(l, a, i), t(l, b, j), -s[a][b] * mm);
                        }
                    }
                }
            }
            if let Some(beta) = data.beta {
                let bn = dot(beta(fv.points[q]), n);
                for j in 0..nt {
                    for a in 0..2 {
                        for i in 0..m {
                            ls.add(u(a, i), t(l, a, j), -w * bn * mu[j] * phi[i]);
                        }
                        for i in 0..nt {
                            ls.add(t(l, a, i), t(l, a, j), w * bn * mu[i] * mu[j]);
                        }
                    }
                }
            }
        }
    }

    let lv = cell_values(mesh, basis, c, &quadrature_rule(2 * k + 4).unwrap());
    for q in 0..lv.len() {
        let f = (data.f)(lv.points[q]);
        for i in 0..m {
            for a in 0..2 {
                ls.rhs[u(a, i)] -= lv.weights[q] * f[a] * lv.phi_at(q)[i];
            }
        }
    }
    ls
}

/// Row of the mean-value constraint: `int_Omega p` in terms of the pressure coefficients.
pub fn pressure_mean_row(mesh: &Mesh, layout: &SpaceLayout) -> Vec<(usize, f64)> {
    let basis = ReferenceBasis::new(layout.degree).unwrap();
    let rule = quadrature_rule(layout.degree).unwrap();
    let mut out = Vec::new();
    for c in 0..mesh.num_cells() {
        let cv = cell_values(mesh, &basis, c, &rule);
        for i in 0..layout.m {
            let v: f64 = (0..cv.len()).map(|q| cv.weights[q] * cv.phi_at(q)[i]).sum();
            if v.abs() > 1e-15 * mesh.cell_area(c).sqrt() {
                out.push((layout.p_dof(c, i), v));
            }
        }
    }
    out
}

pub(crate) fn assemble_flow(mesh: &Mesh, layout: &SpaceLayout, data: &FlowData, g: &VectorField, symmetric: bool) -> AssembledSystem {
    let basis = ReferenceBasis::new(layout.degree).unwrap();
    let lam = layout.constraint.expect("flow layouts carry a multiplier");
    let mut extra = Vec::new();
    for (i, v) in pressure_mean_row(mesh, layout) {
        extra.push((lam, i, v));
        extra.push((i, lam, v));
    }
    let gg = g.clone();
    let values = project_dirichlet(mesh, layout, &move |x| gg(x));
    assemble(mesh, layout, |c| flow_kernel(mesh, layout, &basis, data, c), extra, values, symmetric)
}

pub fn assemble_stokes(mesh: &Mesh, problem: &StokesProblem, k: usize) -> Result<AssembledSystem> {
    let layout = build_layout(mesh, k, Equation::Stokes)?;
    problem.check(mesh)?;
    let data = FlowData { nu: problem.nu, stab: &problem.stab, f: &problem.f, beta: None };
    Ok(assemble_flow(mesh, &layout, &data, &problem.g, true))
}

/// Coefficients of the facet-wise projection of a boundary velocity, in the layout's fixed-trace order.
pub fn stokes_dirichlet_lift(mesh: &Mesh, layout: &SpaceLayout, g: &VectorField) -> Vec<f64> {
    let gg = g.clone();
    project_dirichlet(mesh, layout, &move |x| gg(x))
}
