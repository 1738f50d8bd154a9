//! HDG discretization of `div(kappa grad p) = f` in mixed form `u = -kappa grad p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble, project_dirichlet, AssembledSystem, LocalSystem};
use crate::error::{HdgError, Result};
use crate::fem::{
    build_layout, edge_rule, element::cell_values, element::facet_values, element_values, quadrature_rule,
    Dof, Equation, ReferenceBasis, SpaceLayout,
};
use crate::fields::{constant_scalar, identity_tensor, inv2, FacetField, ScalarField, StabilityReport, TensorField, VectorField};
use crate::mesh::{FacetTag, Mesh};

#[derive(Clone)]
pub struct PoissonProblem {
    pub kappa: TensorField,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub f: ScalarField,
    pub p_dirichlet: ScalarField,
    pub p_neumann: ScalarField,
    pub tau: FacetField,
}

impl PoissonProblem {
    /// Unit conductivity, homogeneous boundary data and `tau = 1`.
    pub fn new(f: ScalarField) -> Self {
        PoissonProblem {
            kappa: identity_tensor(),
            kappa_min: 1.0,
            kappa_max: 1.0,
            f,
            p_dirichlet: constant_scalar(0.0),
            p_neumann: constant_scalar(0.0),
            tau: FacetField::Uniform(1.0),
        }
    }

    /// Samples `xi^T kappa xi` at quadrature points and reports the `tau >= C h^{1/2}` margin.
    pub fn check(&self, mesh: &Mesh, seed: u64) -> Result<StabilityReport> {
        self.tau.check_positive(mesh, "tau")?;
        check_kappa(mesh, &self.kappa, self.kappa_min, self.kappa_max, seed)?;
        let report = StabilityReport::new(self.tau.min(mesh), mesh.max_h());
        if !report.satisfies(1.0) {
            log::warn!("tau_min = {} is below h^(1/2) = {}", report.tau_min, report.h.sqrt());
        }
        Ok(report)
    }
}

pub(crate) fn check_kappa(mesh: &Mesh, kappa: &TensorField, kmin: f64, kmax: f64, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rule = quadrature_rule(2).expect("valid degree");
    for c in 0..mesh.num_cells() {
        let map = crate::fem::AffineMap::new(mesh.cell_points(c));
        for x in &rule.points {
            let p = map.forward(*x);
            let k = kappa(p);
            if (k[0][1] - k[1][0]).abs() > 1e-12 * (k[0][0].abs() + k[1][1].abs()) {
                return Err(HdgError::Assembly(format!("kappa is not symmetric in cell {c}")));
            }
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let xi = [t.cos(), t.sin()];
            let q = xi[0] * (k[0][0] * xi[0] + k[0][1] * xi[1]) + xi[1] * (k[1][0] * xi[0] + k[1][1] * xi[1]);
            if q < kmin * (1.0 - 1e-12) || q > kmax * (1.0 + 1e-12) {
                return Err(HdgError::Assembly(format!(
                    "kappa leaves its declared bounds [{kmin}, {kmax}] in cell {c} (xi^T kappa xi = {q})"
                )));
            }
        }
    }
    Ok(())
}

/// Convection-reaction data appended to the scalar element kernel.
pub(crate) struct Convection<'a> {
    pub beta: &'a VectorField,
    pub c: &'a ScalarField,
    pub div_beta: &'a (dyn Fn([f64; 2]) -> f64 + Sync),
}

pub(crate) struct ScalarData<'a> {
    pub kappa: &'a TensorField,
    pub tau: &'a FacetField,
    pub f: &'a ScalarField,
    /// `+1` when the volume load enters as `+(f, q)`, `-1` for `-(f, q)`.
    pub f_sign: f64,
    pub neumann: Option<&'a ScalarField>,
    pub convection: Option<Convection<'a>>,
}

/// Element matrix of `B_P` (plus the convection terms of `B_C` when present).
///
/// Local order: `u_x`, `u_y`, `p`, then the traces of local facets 0, 1, 2.
pub(crate) fn scalar_kernel(
    mesh: &Mesh,
    layout: &SpaceLayout,
    basis: &ReferenceBasis,
    data: &ScalarData,
    c: usize,
) -> LocalSystem {
    let k = layout.degree;
    let m = layout.m;
    let nt = layout.nt;
    let ev = element_values(mesh, basis, c, &quadrature_rule(2 * k + 2).unwrap(), &edge_rule(2 * k + 2).unwrap());
    let mut ls = LocalSystem::new(layout.element_dofs(mesh, c));
    let u = |a: usize, i: usize| a * m + i;
    let p = |i: usize| 2 * m + i;
    let t = |l: usize, j: usize| 3 * m + l * nt + j;

    let vol = &ev.volume;
    for q in 0..vol.len() {
        let w = vol.weights[q];
        let x = vol.points[q];
        let kinv = inv2((data.kappa)(x));
        let phi = vol.phi_at(q);
        let grad = vol.grad_at(q);
        for i in 0..m {
            for j in 0..m {
                let pp = w * phi[i] * phi[j];
                for a in 0..2 {
                    for b in 0..2 {
                        ls.add(u(a, i), u(b, j), kinv[a][b] * pp);
                    }
                    ls.add(u(a, i), p(j), w * grad[j][a] * phi[i]);
                    ls.add(p(i), u(a, j), w * phi[j] * grad[i][a]);
                }
            }
        }
        if let Some(conv) = &data.convection {
            let beta = (conv.beta)(x);
            let react = (conv.c)(x) - (conv.div_beta)(x);
            for i in 0..m {
                let bg = beta[0] * grad[i][0] + beta[1] * grad[i][1];
                for j in 0..m {
                    ls.add(p(i), p(j), w * (bg * phi[j] - react * phi[i] * phi[j]));
                }
            }
        }
    }

    for (l, fv) in ev.facets.iter().enumerate() {
        let tau = data.tau.value(fv.facet);
        let n = fv.normal;
        for q in 0..fv.len() {
            let w = fv.weights[q];
            let phi = fv.phi_at(q);
            let mu = fv.mu_at(q);
            for i in 0..m {
                for j in 0..m {
                    let pp = w * phi[i] * phi[j];
                    for a in 0..2 {
                        ls.add(u(a, i), p(j), -pp * n[a]);
                        ls.add(p(i), u(a, j), -pp * n[a]);
                    }
                    ls.add(p(i), p(j), -tau * pp);
                }
                for j in 0..nt {
                    let pm = w * phi[i] * mu[j];
                    for a in 0..2 {
                        ls.add(u(a, i), t(l, j), pm * n[a]);
                        ls.add(t(l, j), u(a, i), pm * n[a]);
                    }
                    ls.add(p(i), t(l, j), tau * pm);
                    ls.add(t(l, j), p(i), tau * pm);
                }
            }
            for i in 0..nt {
                for j in 0..nt {
                    ls.add(t(l, i), t(l, j), -tau * w * mu[i] * mu[j]);
                }
            }
            if let Some(conv) = &data.convection {
                let bn = crate::fields::dot((conv.beta)(fv.points[q]), n);
                for j in 0..nt {
                    for i in 0..m {
                        ls.add(p(i), t(l, j), -w * bn * mu[j] * phi[i]);
                    }
                    for i in 0..nt {
                        ls.add(t(l, i), t(l, j), w * bn * mu[i] * mu[j]);
                    }
                }
            }
        }
    }

    let load_rule = quadrature_rule(2 * k + 4).unwrap();
    let lv = cell_values(mesh, basis, c, &load_rule);
    for q in 0..lv.len() {
        let fw = data.f_sign * lv.weights[q] * (data.f)(lv.points[q]);
        for i in 0..m {
            ls.rhs[p(i)] += fw * lv.phi_at(q)[i];
        }
    }
    if let Some(pn) = data.neumann {
        let er = edge_rule(2 * k + 4).unwrap();
        for l in 0..3 {
            let f = mesh.cell_facets[c][l].facet;
            if mesh.facet_tags[f] != FacetTag::Neumann {
                continue;
            }
            let fv = facet_values(mesh, basis, c, l, &er);
            for q in 0..fv.len() {
                let g = fv.weights[q] * pn(fv.points[q]);
                for j in 0..nt {
                    ls.rhs[t(l, j)] += g * fv.mu_at(q)[j];
                }
            }
        }
    }
    ls
}

pub fn assemble_poisson(mesh: &Mesh, problem: &PoissonProblem, k: usize) -> Result<AssembledSystem> {
    let layout = build_layout(mesh, k, Equation::Poisson)?;
    problem.tau.check_positive(mesh, "tau")?;
    let report = StabilityReport::new(problem.tau.min(mesh), mesh.max_h());
    if !report.satisfies(1.0) {
        log::warn!("tau_min = {} is below h^(1/2) = {}", report.tau_min, report.h.sqrt());
    }
    let basis = ReferenceBasis::new(k)?;
    let data = ScalarData {
        kappa: &problem.kappa,
        tau: &problem.tau,
        f: &problem.f,
        f_sign: 1.0,
        neumann: Some(&problem.p_neumann),
        convection: None,
    };
    let pd = problem.p_dirichlet.clone();
    let g = project_dirichlet(mesh, &layout, &move |x| [pd(x), 0.0]);
    Ok(assemble(mesh, &layout, |c| scalar_kernel(mesh, &layout, &basis, &data, c), Vec::new(), g, true))
}

/// Right-hand side written out term by term:
/// `-<P_M p_D, v.n>_D`, `-<tau P_M p_D, q>_D + (f, q)` and `<p_N, qbar>_N`.
pub fn poisson_rhs_only(mesh: &Mesh, problem: &PoissonProblem, layout: &SpaceLayout) -> Vec<f64> {
    let k = layout.degree;
    let m = layout.m;
    let basis = ReferenceBasis::new(k).expect("layout degree is supported");
    let pd = problem.p_dirichlet.clone();
    let g = project_dirichlet(mesh, layout, &move |x| [pd(x), 0.0]);
    let mut rhs = vec![0.0; layout.n_dofs];
    let load_rule = quadrature_rule(2 * k + 4).unwrap();
    let er = edge_rule(2 * k + 4).unwrap();
    for c in 0..mesh.num_cells() {
        let lv = cell_values(mesh, &basis, c, &load_rule);
        for q in 0..lv.len() {
            let fw = lv.weights[q] * (problem.f)(lv.points[q]);
            for i in 0..m {
                rhs[layout.p_dof(c, i)] += fw * lv.phi_at(q)[i];
            }
        }
        for l in 0..3 {
            let f = mesh.cell_facets[c][l].facet;
            let tag = mesh.facet_tags[f];
            if tag == FacetTag::Interior {
                continue;
            }
            let fv = facet_values(mesh, &basis, c, l, &er);
            let tau = problem.tau.value(f);
            for q in 0..fv.len() {
                let w = fv.weights[q];
                let mu = fv.mu_at(q);
                let phi = fv.phi_at(q);
                match tag {
                    FacetTag::Dirichlet => {
                        let gq: f64 = (0..=k)
                            .map(|j| match layout.trace_dof(f, 0, j) {
                                Dof::Fixed(i) => g[i] * mu[j],
                                Dof::Free(_) => unreachable!(),
                            })
                            .sum();
                        for i in 0..m {
                            for a in 0..2 {
                                rhs[layout.u_dof(c, a, i)] -= w * gq * phi[i] * fv.normal[a];
                            }
                            rhs[layout.p_dof(c, i)] -= w * tau * gq * phi[i];
                        }
                    }
                    FacetTag::Neumann => {
                        let pn = (problem.p_neumann)(fv.points[q]);
                        for j in 0..=k {
                            if let Dof::Free(i) = layout.trace_dof(f, 0, j) {
                                rhs[i] += w * pn * mu[j];
                            }
                        }
                    }
                    FacetTag::Interior => {}
                }
            }
        }
    }
    rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::constant_scalar;
    use crate::mesh::generate_structured;
    use std::sync::Arc;

    #[test]
    fn symmetric_with_spd_and_psd_blocks() {
        let mesh = generate_structured(3).unwrap();
        let mut prob = PoissonProblem::new(Arc::new(|x| x[0] * x[1]));
        prob.kappa = Arc::new(|x| [[1.0 + x[0], 0.2], [0.2, 2.0]]);
        prob.kappa_min = 0.5;
        prob.kappa_max = 3.0;
        prob.check(&mesh, 7).unwrap();
        let sys = assemble_poisson(&mesh, &prob, 2).unwrap();
        assert!(sys.matrix.asymmetry() < 1e-12 * sys.matrix.max_abs());
        let l = &sys.layout;
        let dense = sys.matrix.to_dense();
        let a_block = dense.submatrix(l.u_offset, l.u_offset, l.dim_v(), l.dim_v()).to_owned();
        let ev = a_block.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        assert!(ev[0] > 0.0);
        let start = l.p_offset;
        let size = l.n_dofs - start;
        let c_block = dense.submatrix(start, start, size, size).to_owned();
        let ev = c_block.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        assert!(*ev.last().unwrap() < 1e-12);
    }

    #[test]
    fn rhs_only_matches_lifted_assembly() {
        let mut mesh = generate_structured(3).unwrap();
        mesh.retag_boundary(|x| (x[0] > 0.999).then_some(FacetTag::Neumann));
        let mut prob = PoissonProblem::new(Arc::new(|x| (x[0] * 3.0).sin()));
        prob.p_dirichlet = Arc::new(|x| x[0] * x[0] - x[1]);
        prob.p_neumann = Arc::new(|x| 1.0 + x[1]);
        prob.tau = FacetField::PerFacet((0..mesh.num_facets()).map(|f| 1.0 + 0.1 * f as f64).collect());
        let sys = assemble_poisson(&mesh, &prob, 1).unwrap();
        let rhs = poisson_rhs_only(&mesh, &prob, &sys.layout);
        let scale = sys.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in rhs.iter().zip(&sys.rhs) {
            assert!((a - b).abs() < 1e-13 * scale);
        }
    }

    #[test]
    fn rhs_only_simple_cases() {
        let mut mesh = generate_structured(2).unwrap();
        let layout = build_layout(&mesh, 0, Equation::Poisson).unwrap();
        let zero = PoissonProblem::new(constant_scalar(0.0));
        assert!(poisson_rhs_only(&mesh, &zero, &layout).iter().all(|&v| v == 0.0));

        let one = PoissonProblem::new(constant_scalar(1.0));
        let rhs = poisson_rhs_only(&mesh, &one, &layout);
        for c in 0..mesh.num_cells() {
            // k = 0: the basis function is the constant 1/sqrt(|K|).
            let area = mesh.cell_area(c);
            assert!((rhs[layout.p_dof(c, 0)] - area / area.sqrt()).abs() < 1e-14);
        }

        mesh.retag_boundary(|x| (x[0] > 0.999).then_some(FacetTag::Neumann));
        let layout = build_layout(&mesh, 0, Equation::Poisson).unwrap();
        let mut neu = PoissonProblem::new(constant_scalar(0.0));
        neu.p_neumann = constant_scalar(1.0);
        let rhs = poisson_rhs_only(&mesh, &neu, &layout);
        for f in 0..mesh.num_facets() {
            if let Dof::Free(i) = layout.trace_dof(f, 0, 0) {
                let len = mesh.facets[f].length;
                let expect = if mesh.facet_tags[f] == FacetTag::Neumann { len / len.sqrt() } else { 0.0 };
                assert!((rhs[i] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn nonpositive_tau_names_facet() {
        let mesh = generate_structured(1).unwrap();
        let mut prob = PoissonProblem::new(constant_scalar(0.0));
        prob.tau = FacetField::Uniform(-1.0);
        let err = assemble_poisson(&mesh, &prob, 1).unwrap_err();
        assert!(matches!(err, HdgError::Assembly(ref m) if m.contains("facet 0")));
    }
}
