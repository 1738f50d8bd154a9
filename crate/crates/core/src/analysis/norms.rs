//! Composite norms of the stability analysis, facet seminorms and errors against closed-form fields.

use rayon::prelude::*;

use crate::assembly::{assemble, LocalSystem};
use crate::cdr::CdrProblem;
use crate::fem::{edge_rule, element_values, quadrature_rule, Dof, ElementValues, ReferenceBasis, SpaceLayout};
use crate::fields::{dot, inv2, FacetField, TensorField, VectorField};
use crate::mesh::{Mesh, Point};
use crate::oseen::OseenProblem;
use crate::poisson::PoissonProblem;
use crate::sparse::CsrMatrix;
use crate::stokes::{StokesProblem, TensorStabilization};

/// Which composite norm is measured.
#[derive(Clone)]
pub enum NormKind {
    /// `X_h`: `(kappa^-1 v, v) + ||q||^2 + |q - qbar|_tau^2`.
    Poisson { kappa: TensorField, tau: FacetField },
    /// `X~_h`: the facet weight is `tau - (beta.n)/2` seen from each cell.
    Cdr { kappa: TensorField, tau: FacetField, beta: VectorField },
    /// `Y_h`: `nu^-1 ||tau||^2 + ||v||^2 + |v - vbar|_S^2 + ||q||^2`.
    Stokes { nu: f64, stab: TensorStabilization },
    /// `Y~_h`: the facet weight is `S - (beta.n)/2 I`.
    Oseen { nu: f64, stab: TensorStabilization, beta: VectorField },
}

/// Cell blocks of a coefficient vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Sigma,
    U,
    P,
}

/// Squared contributions of a composite norm.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormParts {
    /// `(kappa^-1 v, v)` for scalar problems, `nu^-1 ||tau||^2` for flow problems.
    pub flux: f64,
    /// `||v||^2` of the velocity; zero for scalar problems.
    pub velocity: f64,
    pub pressure: f64,
    pub facet: f64,
}

impl NormParts {
    pub fn total(&self) -> f64 {
        self.flux + self.velocity + self.pressure + self.facet
    }
}

pub struct NormEvaluator<'a> {
    pub mesh: &'a Mesh,
    pub layout: SpaceLayout,
    pub kind: NormKind,
    /// Degree of the quadrature used for every integral, `2k + 4` by default.
    pub quad_degree: usize,
    basis: ReferenceBasis,
}

pub fn block_components(layout: &SpaceLayout, block: Block) -> usize {
    match block {
        Block::Sigma => layout.sigma_components,
        Block::U => layout.u_components,
        Block::P => 1,
    }
}

pub fn block_dof(layout: &SpaceLayout, block: Block, c: usize, comp: usize, i: usize) -> usize {
    match block {
        Block::Sigma => layout.sigma_dof(c, comp, i),
        Block::U => layout.u_dof(c, comp, i),
        Block::P => layout.p_dof(c, i),
    }
}

/// Trace coefficient `(f, comp, j)`, taken from `fixed` on Dirichlet facets.
pub fn trace_value(layout: &SpaceLayout, x: &[f64], fixed: &[f64], f: usize, comp: usize, j: usize) -> f64 {
    match layout.trace_dof(f, comp, j) {
        Dof::Free(i) => x[i],
        Dof::Fixed(i) => fixed.get(i).copied().unwrap_or(0.0),
    }
}

fn eval(coef: &[f64], phi: &[f64]) -> f64 {
    coef.iter().zip(phi).map(|(a, b)| a * b).sum()
}

impl<'a> NormEvaluator<'a> {
    pub fn new(mesh: &'a Mesh, layout: SpaceLayout, kind: NormKind) -> Self {
        let quad_degree = 2 * layout.degree + 4;
        let basis = ReferenceBasis::new(layout.degree).expect("layout degree is supported");
        NormEvaluator { mesh, layout, kind, quad_degree, basis }
    }

    pub fn poisson(mesh: &'a Mesh, layout: SpaceLayout, p: &PoissonProblem) -> Self {
        Self::new(mesh, layout, NormKind::Poisson { kappa: p.kappa.clone(), tau: p.tau.clone() })
    }

    pub fn cdr(mesh: &'a Mesh, layout: SpaceLayout, p: &CdrProblem) -> Self {
        Self::new(mesh, layout, NormKind::Cdr { kappa: p.kappa.clone(), tau: p.tau.clone(), beta: p.beta.clone() })
    }

    pub fn stokes(mesh: &'a Mesh, layout: SpaceLayout, p: &StokesProblem) -> Self {
        Self::new(mesh, layout, NormKind::Stokes { nu: p.nu, stab: p.stab.clone() })
    }

    pub fn oseen(mesh: &'a Mesh, layout: SpaceLayout, p: &OseenProblem) -> Self {
        Self::new(mesh, layout, NormKind::Oseen { nu: p.nu, stab: p.stab.clone(), beta: p.beta.clone() })
    }

    fn is_flow(&self) -> bool {
        matches!(self.kind, NormKind::Stokes { .. } | NormKind::Oseen { .. })
    }

    fn values(&self, c: usize) -> ElementValues {
        element_values(
            self.mesh,
            &self.basis,
            c,
            &quadrature_rule(self.quad_degree).expect("degree within range"),
            &edge_rule(self.quad_degree).expect("degree within range"),
        )
    }

    /// Facet weight at `x` on facet `f` seen with outward normal `n`; scalar weights sit in `[0][0]`.
    fn weight(&self, f: usize, x: Point, n: Point) -> [[f64; 2]; 2] {
        match &self.kind {
            NormKind::Poisson { tau, .. } => [[tau.value(f), 0.0], [0.0, 0.0]],
            NormKind::Cdr { tau, beta, .. } => [[tau.value(f) - 0.5 * dot(beta(x), n), 0.0], [0.0, 0.0]],
            NormKind::Stokes { stab, .. } => stab.tensor(f, n),
            NormKind::Oseen { stab, beta, .. } => {
                let s = stab.tensor(f, n);
                let bn = 0.5 * dot(beta(x), n);
                [[s[0][0] - bn, s[0][1]], [s[1][0], s[1][1] - bn]]
            }
        }
    }

    fn kappa_inv(&self, x: Point) -> [[f64; 2]; 2] {
        match &self.kind {
            NormKind::Poisson { kappa, .. } | NormKind::Cdr { kappa, .. } => inv2(kappa(x)),
            _ => [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    fn nu(&self) -> f64 {
        match &self.kind {
            NormKind::Stokes { nu, .. } | NormKind::Oseen { nu, .. } => *nu,
            _ => 1.0,
        }
    }

    fn coeffs(&self, x: &[f64], block: Block, c: usize, comp: usize) -> Vec<f64> {
        (0..self.layout.m).map(|i| x[block_dof(&self.layout, block, c, comp, i)]).collect()
    }

    /// Gram matrix of the composite norm over the free unknowns; the multiplier row and column are zero.
    pub fn gram(&self) -> CsrMatrix {
        let l = &self.layout;
        let fixed = vec![0.0; l.n_fixed()];
        let sys = if self.is_flow() {
            assemble(self.mesh, l, |c| self.flow_gram(c), Vec::new(), fixed, true)
        } else {
            assemble(self.mesh, l, |c| self.scalar_gram(c), Vec::new(), fixed, true)
        };
        sys.matrix
    }

    fn scalar_gram(&self, c: usize) -> LocalSystem {
        let (m, nt) = (self.layout.m, self.layout.nt);
        let ev = self.values(c);
        let mut ls = LocalSystem::new(self.layout.element_dofs(self.mesh, c));
        let u = |a: usize, i: usize| a * m + i;
        let p = |i: usize| 2 * m + i;
        let t = |l: usize, j: usize| 3 * m + l * nt + j;
        let vol = &ev.volume;
        for q in 0..vol.len() {
            let kinv = self.kappa_inv(vol.points[q]);
            let phi = vol.phi_at(q);
            for i in 0..m {
                for j in 0..m {
                    let pp = vol.weights[q] * phi[i] * phi[j];
                    for a in 0..2 {
                        for b in 0..2 {
                            ls.add(u(a, i), u(b, j), kinv[a][b] * pp);
                        }
                    }
                    ls.add(p(i), p(j), pp);
                }
            }
        }
        for (l, fv) in ev.facets.iter().enumerate() {
            for q in 0..fv.len() {
                let w = fv.weights[q] * self.weight(fv.facet, fv.points[q], fv.normal)[0][0];
                let (phi, mu) = (fv.phi_at(q), fv.mu_at(q));
                for i in 0..m {
                    for j in 0..m {
                        ls.add(p(i), p(j), w * phi[i] * phi[j]);
                    }
                    for j in 0..nt {
                        ls.add(p(i), t(l, j), -w * phi[i] * mu[j]);
                        ls.add(t(l, j), p(i), -w * phi[i] * mu[j]);
                    }
                }
                for i in 0..nt {
                    for j in 0..nt {
                        ls.add(t(l, i), t(l, j), w * mu[i] * mu[j]);
                    }
                }
            }
        }
        ls
    }

    fn flow_gram(&self, c: usize) -> LocalSystem {
        let (m, nt) = (self.layout.m, self.layout.nt);
        let nu_inv = 1.0 / self.nu();
        let ev = self.values(c);
        let mut ls = LocalSystem::new(self.layout.element_dofs(self.mesh, c));
        let u = |a: usize, i: usize| (4 + a) * m + i;
        let p = |i: usize| 6 * m + i;
        let t = |l: usize, a: usize, j: usize| 7 * m + l * 2 * nt + a * nt + j;
        let vol = &ev.volume;
        for q in 0..vol.len() {
            let phi = vol.phi_at(q);
            for i in 0..m {
                for j in 0..m {
                    let pp = vol.weights[q] * phi[i] * phi[j];
                    for s in 0..4 {
                        ls.add(s * m + i, s * m + j, nu_inv * pp);
                    }
                    for a in 0..2 {
                        ls.add(u(a, i), u(a, j), pp);
                    }
                    ls.add(p(i), p(j), pp);
                }
            }
        }
        for (l, fv) in ev.facets.iter().enumerate() {
            for q in 0..fv.len() {
                let w = fv.weights[q];
                let s = self.weight(fv.facet, fv.points[q], fv.normal);
                let (phi, mu) = (fv.phi_at(q), fv.mu_at(q));
                for a in 0..2 {
                    for b in 0..2 {
                        let ws = w * s[a][b];
                        for i in 0..m {
                            for j in 0..m {
                                ls.add(u(a, i), u(b, j), ws * phi[i] * phi[j]);
                            }
                            for j in 0..nt {
                                ls.add(u(a, i), t(l, b, j), -ws * phi[i] * mu[j]);
                                ls.add(t(l, a, j), u(b, i), -ws * mu[j] * phi[i]);
                            }
                        }
                        for i in 0..nt {
                            for j in 0..nt {
                                ls.add(t(l, a, i), t(l, b, j), ws * mu[i] * mu[j]);
                            }
                        }
                    }
                }
            }
        }
        ls
    }

    /// `x^T N x` split into its parts, computed by quadrature without the Gram matrix.
    pub fn parts(&self, x: &[f64]) -> NormParts {
        let fixed = vec![0.0; self.layout.n_fixed()];
        let per_cell: Vec<NormParts> = (0..self.mesh.num_cells())
            .into_par_iter()
            .map(|c| {
                let ev = self.values(c);
                let vol = &ev.volume;
                let mut out = NormParts::default();
                if self.is_flow() {
                    let nu_inv = 1.0 / self.nu();
                    for s in 0..4 {
                        out.flux += nu_inv * self.block_mass(&ev, &self.coeffs(x, Block::Sigma, c, s));
                    }
                    for a in 0..2 {
                        out.velocity += self.block_mass(&ev, &self.coeffs(x, Block::U, c, a));
                    }
                } else {
                    let cu = [self.coeffs(x, Block::U, c, 0), self.coeffs(x, Block::U, c, 1)];
                    for q in 0..vol.len() {
                        let v = [eval(&cu[0], vol.phi_at(q)), eval(&cu[1], vol.phi_at(q))];
                        let kinv = self.kappa_inv(vol.points[q]);
                        let kv = [kinv[0][0] * v[0] + kinv[0][1] * v[1], kinv[1][0] * v[0] + kinv[1][1] * v[1]];
                        out.flux += vol.weights[q] * dot(kv, v);
                    }
                }
                out.pressure = self.block_mass(&ev, &self.coeffs(x, Block::P, c, 0));
                out.facet = self.cell_facet_sum(&ev, x, &fixed, 0.0, false, None);
                out
            })
            .collect();
        per_cell.iter().fold(NormParts::default(), |a, b| NormParts {
            flux: a.flux + b.flux,
            velocity: a.velocity + b.velocity,
            pressure: a.pressure + b.pressure,
            facet: a.facet + b.facet,
        })
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.parts(x).total().sqrt()
    }

    fn block_mass(&self, ev: &ElementValues, coef: &[f64]) -> f64 {
        let vol = &ev.volume;
        (0..vol.len()).map(|q| vol.weights[q] * eval(coef, vol.phi_at(q)).powi(2)).sum()
    }

    /// `sum_{F in dK} h_K^{2s} <W (v - vbar), v - vbar>_F` on one cell.
    fn cell_facet_sum(
        &self,
        ev: &ElementValues,
        x: &[f64],
        fixed: &[f64],
        s: f64,
        identity: bool,
        exact: Option<&(dyn Fn(Point) -> [f64; 2] + Sync)>,
    ) -> f64 {
        let l = &self.layout;
        let c = ev.cell;
        let hw = ev.h.powf(2.0 * s);
        let (block, comps) = if self.is_flow() { (Block::U, 2) } else { (Block::P, 1) };
        let cell: Vec<Vec<f64>> = (0..comps).map(|a| self.coeffs(x, block, c, a)).collect();
        let mut total = 0.0;
        for fv in &ev.facets {
            let tr: Vec<Vec<f64>> = (0..comps)
                .map(|a| (0..l.nt).map(|j| trace_value(l, x, fixed, fv.facet, a, j)).collect())
                .collect();
            for q in 0..fv.len() {
                let mut d = [0.0; 2];
                let ex = exact.map(|g| g(fv.points[q]));
                for a in 0..comps {
                    let inner = match ex {
                        Some(v) => v[a],
                        None => eval(&cell[a], fv.phi_at(q)),
                    };
                    d[a] = inner - eval(&tr[a], fv.mu_at(q));
                }
                let w = if identity {
                    [[1.0, 0.0], [0.0, 1.0]]
                } else {
                    self.weight(fv.facet, fv.points[q], fv.normal)
                };
                let val = if comps == 1 {
                    w[0][0] * d[0] * d[0]
                } else {
                    d[0] * (w[0][0] * d[0] + w[0][1] * d[1]) + d[1] * (w[1][0] * d[0] + w[1][1] * d[1])
                };
                total += fv.weights[q] * val;
            }
        }
        hw * total
    }

    fn facet_sum(
        &self,
        x: &[f64],
        fixed: &[f64],
        s: f64,
        identity: bool,
        exact: Option<&(dyn Fn(Point) -> [f64; 2] + Sync)>,
    ) -> f64 {
        let parts: Vec<f64> = (0..self.mesh.num_cells())
            .into_par_iter()
            .map(|c| self.cell_facet_sum(&self.values(c), x, fixed, s, identity, exact))
            .collect();
        parts.iter().sum::<f64>().max(0.0).sqrt()
    }

    /// `|q - qbar|_{W,s,F_h}` with this norm's facet weight; `fixed` holds the Dirichlet trace values.
    pub fn facet_seminorm(&self, x: &[f64], fixed: &[f64], s: f64) -> f64 {
        self.facet_sum(x, fixed, s, false, None)
    }

    /// `|v - vbar|_{I,s,F_h}`.
    pub fn identity_seminorm(&self, x: &[f64], fixed: &[f64], s: f64) -> f64 {
        self.facet_sum(x, fixed, s, true, None)
    }

    /// `|g - gbar|_{W,s,F_h}` (or with the identity weight) between a closed-form field and the traces of `x`.
    pub fn trace_error(
        &self,
        g: &(dyn Fn(Point) -> [f64; 2] + Sync),
        x: &[f64],
        fixed: &[f64],
        s: f64,
        identity: bool,
    ) -> f64 {
        self.facet_sum(x, fixed, s, identity, Some(g))
    }

    /// `||exact - discrete||` over a cell block; components beyond the block's count are ignored.
    pub fn l2_error(&self, x: &[f64], block: Block, exact: &(dyn Fn(Point) -> [f64; 4] + Sync)) -> f64 {
        self.weighted_error(x, block, exact, false)
    }

    /// `||u - u_h||_{V_h} = (kappa^-1 e, e)^{1/2}` for scalar problems; plain `L^2` for flow problems.
    pub fn flux_error(&self, x: &[f64], exact: &VectorField) -> f64 {
        let e = exact.clone();
        self.weighted_error(x, Block::U, &move |p| {
            let v = e(p);
            [v[0], v[1], 0.0, 0.0]
        }, !self.is_flow())
    }

    fn weighted_error(&self, x: &[f64], block: Block, exact: &(dyn Fn(Point) -> [f64; 4] + Sync), kappa: bool) -> f64 {
        let comps = block_components(&self.layout, block);
        let parts: Vec<f64> = (0..self.mesh.num_cells())
            .into_par_iter()
            .map(|c| {
                let rule = quadrature_rule(self.quad_degree).expect("degree within range");
                let cv = crate::fem::element::cell_values(self.mesh, &self.basis, c, &rule);
                let coef: Vec<Vec<f64>> = (0..comps).map(|a| self.coeffs(x, block, c, a)).collect();
                let mut s = 0.0;
                for q in 0..cv.len() {
                    let ex = exact(cv.points[q]);
                    let mut e = [0.0; 4];
                    for a in 0..comps {
                        e[a] = ex[a] - eval(&coef[a], cv.phi_at(q));
                    }
                    let v = if kappa {
                        let ki = self.kappa_inv(cv.points[q]);
                        e[0] * (ki[0][0] * e[0] + ki[0][1] * e[1]) + e[1] * (ki[1][0] * e[0] + ki[1][1] * e[1])
                    } else {
                        e.iter().map(|v| v * v).sum()
                    };
                    s += cv.weights[q] * v;
                }
                s
            })
            .collect();
        parts.iter().sum::<f64>().max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_layout, Equation};
    use crate::fields::constant_scalar;
    use crate::mesh::generate_structured;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn quad_form(m: &CsrMatrix, x: &[f64]) -> f64 {
        m.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn gram_matches_quadrature_parts() {
        let mesh = generate_structured(3).unwrap();
        for eq in [Equation::Poisson, Equation::Stokes] {
            for k in 0..=2 {
                let layout = build_layout(&mesh, k, eq).unwrap();
                let ne = if eq == Equation::Poisson {
                    let mut p = PoissonProblem::new(constant_scalar(0.0));
                    p.kappa = crate::fields::constant_tensor([[2.0, 0.3], [0.3, 1.0]]);
                    p.tau = FacetField::Uniform(1.7);
                    NormEvaluator::poisson(&mesh, layout.clone(), &p)
                } else {
                    let mut p = StokesProblem::new(0.5, crate::fields::constant_vector([0.0, 0.0]));
                    p.stab = TensorStabilization::uniform(2.0, 0.6);
                    NormEvaluator::stokes(&mesh, layout.clone(), &p)
                };
                let mut x = random(layout.n_dofs, k as u64);
                if let Some(l) = layout.constraint {
                    x[l] = 0.0;
                }
                let g = ne.gram();
                let a = quad_form(&g, &x);
                let b = ne.parts(&x).total();
                assert!((a - b).abs() <= 1e-12 * b, "{eq:?} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_field_zero_norm() {
        let mesh = generate_structured(2).unwrap();
        let layout = build_layout(&mesh, 1, Equation::Poisson).unwrap();
        let ne = NormEvaluator::poisson(&mesh, layout.clone(), &PoissonProblem::new(constant_scalar(0.0)));
        assert!(ne.norm(&vec![0.0; layout.n_dofs]) < 1e-15);
    }
}
