//! HDG discretization of the Oseen problem `-div(nu grad u - u (x) beta - p I) = f`, `div u = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::AssembledSystem;
use crate::error::{HdgError, Result};
use crate::fem::{build_layout, edge_rule, element_values, quadrature_rule, Equation, ReferenceBasis, SpaceLayout};
use crate::fields::{constant_vector, dot, fd_divergence, ScalarField, StabilityReport, VectorField};
use crate::mesh::Mesh;
use crate::stokes::{assemble_flow, sym2_eigenvalues, FlowData, TensorStabilization};

#[derive(Clone)]
pub struct OseenProblem {
    pub nu: f64,
    pub f: VectorField,
    pub stab: TensorStabilization,
    pub beta: VectorField,
    pub div_beta: Option<ScalarField>,
    pub g: VectorField,
}

/// Per-facet lower bounds of `S_beta = S - (beta.n)/2 I`, sampled at facet quadrature points from both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct OseenReport {
    /// Smallest eigenvalue of `S_beta` on each facet.
    pub facet_min_eigenvalue: Vec<f64>,
    pub tau_beta_min: f64,
    /// `max_K max(tau_beta_t h_K, tau_beta_n h_K)`.
    pub tau_beta_bar: f64,
    /// Sampled `max |beta| + max |grad beta|` over the cells.
    pub beta_w1inf: f64,
    pub stability: StabilityReport,
}

impl OseenProblem {
    pub fn new(nu: f64, f: VectorField, beta: VectorField) -> Self {
        OseenProblem {
            nu,
            f,
            stab: TensorStabilization::uniform(1.0, 1.0),
            beta,
            div_beta: None,
            g: constant_vector([0.0, 0.0]),
        }
    }

    pub fn check(&self, mesh: &Mesh, k: usize) -> Result<OseenReport> {
        if !(self.nu > 0.0) {
            return Err(HdgError::Assembly(format!("viscosity nu = {} is not positive", self.nu)));
        }
        self.stab.check(mesh)?;
        let qr = quadrature_rule(2 * k + 2)?;
        let er = edge_rule(2 * k + 2)?;
        let mut w1 = 0.0f64;
        for c in 0..mesh.num_cells() {
            let map = crate::fem::AffineMap::new(mesh.cell_points(c));
            for x in &qr.points {
                let p = map.forward(*x);
                let div = match &self.div_beta {
                    Some(d) => d(p),
                    None => fd_divergence(&self.beta, p, 1e-6),
                };
                let tol = if self.div_beta.is_some() { 1e-10 } else { 1e-7 };
                if div.abs() > tol {
                    return Err(HdgError::Assembly(format!(
                        "div(beta) = {div} is not zero in cell {c} at ({:.6}, {:.6})",
                        p[0], p[1]
                    )));
                }
                let b = (self.beta)(p);
                let h = 1e-6;
                let gx = [(self.beta)([p[0] + h, p[1]]), (self.beta)([p[0] - h, p[1]])];
                let gy = [(self.beta)([p[0], p[1] + h]), (self.beta)([p[0], p[1] - h])];
                let grad_norm = (0..2)
                    .map(|a| ((gx[0][a] - gx[1][a]) / (2.0 * h)).abs().max(((gy[0][a] - gy[1][a]) / (2.0 * h)).abs()))
                    .fold(0.0, f64::max);
                w1 = w1.max(b[0].abs().max(b[1].abs()) + grad_norm);
            }
        }
        let mut facet_min = vec![f64::INFINITY; mesh.num_facets()];
        let mut tau_beta_bar = 0.0f64;
        for c in 0..mesh.num_cells() {
            for l in 0..3 {
                let f = mesh.cell_facets[c][l].facet;
                let n = mesh.outward_normal(c, l);
                let [a, b] = mesh.facet_points(f);
                let s = self.stab.tensor(f, n);
                for &t in &er.points {
                    let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                    let bn = dot((self.beta)(x), n);
                    let ev = sym2_eigenvalues([[s[0][0] - 0.5 * bn, s[0][1]], [s[1][0], s[1][1] - 0.5 * bn]]);
                    facet_min[f] = facet_min[f].min(ev[0]);
                    tau_beta_bar = tau_beta_bar.max(ev[1] * mesh.h_cell[c]);
                }
            }
        }
        for (f, &v) in facet_min.iter().enumerate() {
            if v <= 0.0 {
                let m = mesh.facet_midpoint(f);
                let need = self.stab.tau_min(mesh) - v;
                return Err(HdgError::Assembly(format!(
                    "S - (beta.n)/2 I is not positive definite on facet {f} (midpoint ({:.6}, {:.6}), smallest eigenvalue {v}); \
                     a uniform tau above {need:.6} would satisfy it",
                    m[0], m[1]
                )));
            }
        }
        // Normal continuity of beta across interior facets.
        for (f, facet) in mesh.facets.iter().enumerate() {
            if facet.cells.len() == 2 {
                let mid = mesh.facet_midpoint(f);
                let (c0, c1) = (facet.cells[0].0, facet.cells[1].0);
                let eps = 1e-9;
                let n = facet.normal;
                let side = |c: usize| {
                    let p = mesh.cell_points(c);
                    let cen = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
                    let x = [mid[0] + eps * (cen[0] - mid[0]), mid[1] + eps * (cen[1] - mid[1])];
                    dot((self.beta)(x), n)
                };
                if (side(c0) - side(c1)).abs() > 1e-6 {
                    return Err(HdgError::Assembly(format!("beta.n jumps across facet {f}")));
                }
            }
        }
        let tau_beta_min = facet_min.iter().cloned().fold(f64::INFINITY, f64::min);
        let stability = StabilityReport::new(tau_beta_min, mesh.max_h());
        if !stability.satisfies(1.0) {
            log::warn!("tau_beta_min = {tau_beta_min} is below h^(1/2) = {}", stability.h.sqrt());
        }
        Ok(OseenReport { facet_min_eigenvalue: facet_min, tau_beta_min, tau_beta_bar, beta_w1inf: w1, stability })
    }
}

pub fn assemble_oseen(mesh: &Mesh, problem: &OseenProblem, k: usize) -> Result<AssembledSystem> {
    let layout = build_layout(mesh, k, Equation::Oseen)?;
    problem.check(mesh, k)?;
    Ok(assemble_oseen_unchecked(mesh, problem, &layout))
}

fn assemble_oseen_unchecked(mesh: &Mesh, problem: &OseenProblem, layout: &SpaceLayout) -> AssembledSystem {
    let data = FlowData { nu: problem.nu, stab: &problem.stab, f: &problem.f, beta: Some(&problem.beta) };
    assemble_flow(mesh, layout, &data, &problem.g, false)
}

/// Largest gap between `(v (x) beta, grad v)` and `1/2 <(beta.n) v, v>` over random discrete `v`.
pub fn verify_oseen_identity(mesh: &Mesh, beta: &VectorField, k: usize, trials: usize, seed: u64) -> Result<f64> {
    let layout = build_layout(mesh, k, Equation::Oseen)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x: Vec<f64> = (0..layout.n_dofs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (l, r) = oseen_identity_sides(mesh, &layout, beta, &x);
        worst = worst.max((l - r).abs());
    }
    Ok(worst)
}

/// Both sides of the convection identity for the velocity part of a coefficient vector.
pub fn oseen_identity_sides(mesh: &Mesh, layout: &SpaceLayout, beta: &VectorField, x: &[f64]) -> (f64, f64) {
    let k = layout.degree;
    let basis = ReferenceBasis::new(k).unwrap();
    let ev_rule = quadrature_rule(2 * k + 4).unwrap();
    let er = edge_rule(2 * k + 4).unwrap();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for c in 0..mesh.num_cells() {
        let ev = element_values(mesh, &basis, c, &ev_rule, &er);
        for a in 0..2 {
            let coef: Vec<f64> = (0..layout.m).map(|i| x[layout.u_dof(c, a, i)]).collect();
            let vol = &ev.volume;
            for q in 0..vol.len() {
                let val: f64 = coef.iter().zip(vol.phi_at(q)).map(|(s, t)| s * t).sum();
                let g = vol.grad_at(q).iter().zip(&coef).fold([0.0, 0.0], |s, (g, a)| [s[0] + a * g[0], s[1] + a * g[1]]);
                lhs += vol.weights[q] * val * dot(beta(vol.points[q]), g);
            }
            for fv in &ev.facets {
                for q in 0..fv.len() {
                    let val: f64 = coef.iter().zip(fv.phi_at(q)).map(|(s, t)| s * t).sum();
                    rhs += 0.5 * fv.weights[q] * dot(beta(fv.points[q]), fv.normal) * val * val;
                }
            }
        }
    }
    (lhs, rhs)
}
