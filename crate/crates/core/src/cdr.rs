//! HDG discretization of `-div(kappa grad p) + beta . grad p + c p = f` with Dirichlet data on the whole boundary.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble, project_dirichlet, AssembledSystem};
use crate::error::{HdgError, Result};
use crate::fem::{build_layout, edge_rule, element_values, quadrature_rule, Equation, ReferenceBasis};
use crate::fields::{constant_scalar, dot, fd_divergence, identity_tensor, FacetField, ScalarField, StabilityReport, TensorField, VectorField};
use crate::mesh::Mesh;
use crate::poisson::{check_kappa, scalar_kernel, Convection, ScalarData};

#[derive(Clone)]
pub struct CdrProblem {
    pub kappa: TensorField,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub beta: VectorField,
    /// Analytic divergence of `beta`; central differences are used when absent.
    pub div_beta: Option<ScalarField>,
    pub c: ScalarField,
    pub f: ScalarField,
    pub p_dirichlet: ScalarField,
    pub tau: FacetField,
}

/// Quantities behind the well-posedness assumptions, sampled at quadrature points.
#[derive(Clone, Debug, PartialEq)]
pub struct CdrReport {
    /// Smallest `c - div(beta)/2`.
    pub c_beta_min: f64,
    /// Smallest `tau - beta.n/2` over both sides of every facet.
    pub tau_beta_min: f64,
    pub tau_beta_max: f64,
    pub stability: StabilityReport,
}

impl CdrProblem {
    pub fn new(beta: VectorField, c: ScalarField, f: ScalarField) -> Self {
        CdrProblem {
            kappa: identity_tensor(),
            kappa_min: 1.0,
            kappa_max: 1.0,
            beta,
            div_beta: None,
            c,
            f,
            p_dirichlet: constant_scalar(0.0),
            tau: FacetField::Uniform(1.0),
        }
    }

    pub fn div_beta_at(&self, x: [f64; 2]) -> f64 {
        match &self.div_beta {
            Some(d) => d(x),
            None => fd_divergence(&self.beta, x, 1e-6),
        }
    }

    /// Checks `c - div(beta)/2 >= 0` in every cell and `tau - beta.n/2 > 0` on every facet.
    pub fn check(&self, mesh: &Mesh, k: usize) -> Result<CdrReport> {
        self.tau.check_positive(mesh, "tau")?;
        if self.div_beta.is_none() {
            log::info!("div(beta) evaluated by central differences with step 1e-6");
        }
        let qr = quadrature_rule(2 * k + 2)?;
        let er = edge_rule(2 * k + 2)?;
        let mut c_beta_min = f64::INFINITY;
        for c in 0..mesh.num_cells() {
            let map = crate::fem::AffineMap::new(mesh.cell_points(c));
            for x in &qr.points {
                let p = map.forward(*x);
                let cb = (self.c)(p) - 0.5 * self.div_beta_at(p);
                c_beta_min = c_beta_min.min(cb);
                if cb < -1e-12 {
                    return Err(HdgError::Assembly(format!(
                        "c - div(beta)/2 = {cb} is negative in cell {c} at ({:.6}, {:.6})",
                        p[0], p[1]
                    )));
                }
            }
        }
        let (mut tb_min, mut tb_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in 0..mesh.num_cells() {
            for l in 0..3 {
                let f = mesh.cell_facets[c][l].facet;
                let n = mesh.outward_normal(c, l);
                let [a, b] = mesh.facet_points(f);
                for &s in &er.points {
                    let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    let tb = self.tau.value(f) - 0.5 * dot((self.beta)(x), n);
                    tb_min = tb_min.min(tb);
                    tb_max = tb_max.max(tb);
                    if tb <= 0.0 {
                        let m = mesh.facet_midpoint(f);
                        return Err(HdgError::Assembly(format!(
                            "tau - beta.n/2 = {tb} is not positive on facet {f} (midpoint ({:.6}, {:.6}), seen from cell {c}); \
                             a uniform tau above {:.6} would satisfy it",
                            m[0],
                            m[1],
                            self.tau.value(f) - tb
                        )));
                    }
                }
            }
        }
        let stability = StabilityReport::new(tb_min, mesh.max_h());
        if !stability.satisfies(1.0) {
            log::warn!("tau_beta_min = {tb_min} is below h^(1/2) = {}", stability.h.sqrt());
        }
        Ok(CdrReport { c_beta_min, tau_beta_min: tb_min, tau_beta_max: tb_max, stability })
    }
}

pub fn assemble_cdr(mesh: &Mesh, problem: &CdrProblem, k: usize) -> Result<AssembledSystem> {
    let layout = build_layout(mesh, k, Equation::Cdr)?;
    problem.check(mesh, k)?;
    check_kappa(mesh, &problem.kappa, problem.kappa_min, problem.kappa_max, 0)?;
    Ok(assemble_cdr_unchecked(mesh, problem, k, &layout))
}

fn assemble_cdr_unchecked(mesh: &Mesh, problem: &CdrProblem, k: usize, layout: &crate::fem::SpaceLayout) -> AssembledSystem {
    let basis = ReferenceBasis::new(k).expect("degree checked by layout");
    let div = |x: [f64; 2]| problem.div_beta_at(x);
    let data = ScalarData {
        kappa: &problem.kappa,
        tau: &problem.tau,
        f: &problem.f,
        f_sign: -1.0,
        neumann: None,
        convection: Some(Convection { beta: &problem.beta, c: &problem.c, div_beta: &div }),
    };
    let pd = problem.p_dirichlet.clone();
    let g = project_dirichlet(mesh, layout, &move |x| [pd(x), 0.0]);
    assemble(mesh, layout, |c| scalar_kernel(mesh, layout, &basis, &data, c), Vec::new(), g, false)
}

/// Only the convection-reaction part of `B_C`: the matrix of `(beta p, grad q) - ((c - div beta) p, q) - <(beta.n) pbar, q - qbar>`.
pub fn assemble_convection(mesh: &Mesh, beta: VectorField, div_beta: ScalarField, c: ScalarField, k: usize) -> Result<AssembledSystem> {
    let layout = build_layout(mesh, k, Equation::Cdr)?;
    let mut with = CdrProblem::new(beta, c, constant_scalar(0.0));
    with.div_beta = Some(div_beta);
    let full = assemble_cdr_unchecked(mesh, &with, k, &layout);
    let without = crate::poisson::assemble_poisson(mesh, &crate::poisson::PoissonProblem::new(constant_scalar(0.0)), k)?;
    let mut t = full.matrix.triplets();
    t.extend(without.matrix.triplets().into_iter().map(|(i, j, v)| (i, j, -v)));
    let mut out = full;
    out.matrix = crate::sparse::CsrMatrix::from_triplets(layout.n_dofs, layout.n_dofs, &t);
    Ok(out)
}

/// Draws `trials` random discrete pairs `(q, qbar)` with `qbar = 0` on the boundary and returns the
/// largest gap between `(beta q, grad q) - ((c - div beta) q, q) - <(beta.n) qbar, q - qbar>` and
/// `-(c_beta q, q) + 1/2 <(beta.n)(q - qbar), q - qbar>`.
pub fn verify_convection_identity(
    mesh: &Mesh,
    beta: &VectorField,
    div_beta: &ScalarField,
    c: &ScalarField,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let layout = build_layout(mesh, k, Equation::Cdr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x: Vec<f64> = (0..layout.n_dofs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (lhs, rhs) = convection_identity_sides(mesh, &layout, beta, div_beta, c, &x);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Both sides of the convection identity for one coefficient vector (only `p` and trace entries are used).
pub fn convection_identity_sides(
    mesh: &Mesh,
    layout: &crate::fem::SpaceLayout,
    beta: &VectorField,
    div_beta: &ScalarField,
    c: &ScalarField,
    x: &[f64],
) -> (f64, f64) {
    let k = layout.degree;
    let basis = ReferenceBasis::new(k).unwrap();
    let qr = quadrature_rule(2 * k + 4).unwrap();
    let er = edge_rule(2 * k + 4).unwrap();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for cell in 0..mesh.num_cells() {
        let ev = element_values(mesh, &basis, cell, &qr, &er);
        let coef: Vec<f64> = (0..layout.m).map(|i| x[layout.p_dof(cell, i)]).collect();
        let vol = &ev.volume;
        for q in 0..vol.len() {
            let pt = vol.points[q];
            let val: f64 = coef.iter().zip(vol.phi_at(q)).map(|(a, b)| a * b).sum();
            let g = vol.grad_at(q).iter().zip(&coef).fold([0.0, 0.0], |s, (g, a)| [s[0] + a * g[0], s[1] + a * g[1]]);
            let b = beta(pt);
            let cc = c(pt);
            let db = div_beta(pt);
            lhs += vol.weights[q] * (val * dot(b, g) - (cc - db) * val * val);
            rhs -= vol.weights[q] * (cc - 0.5 * db) * val * val;
        }
        for fv in &ev.facets {
            let tr: Vec<f64> = (0..layout.nt)
                .map(|j| match layout.trace_dof(fv.facet, 0, j) {
                    crate::fem::Dof::Free(i) => x[i],
                    crate::fem::Dof::Fixed(_) => 0.0,
                })
                .collect();
            for q in 0..fv.len() {
                let val: f64 = coef.iter().zip(fv.phi_at(q)).map(|(a, b)| a * b).sum();
                let tv: f64 = tr.iter().zip(fv.mu_at(q)).map(|(a, b)| a * b).sum();
                let bn = dot(beta(fv.points[q]), fv.normal);
                lhs -= fv.weights[q] * bn * tv * (val - tv);
                rhs += 0.5 * fv.weights[q] * bn * (val - tv) * (val - tv);
            }
        }
    }
    (lhs, rhs)
}

pub fn rotation_field() -> (VectorField, ScalarField) {
    (Arc::new(|x| [x[1], -x[0]]), constant_scalar(0.0))
}
