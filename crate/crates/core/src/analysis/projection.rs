//! Facet `L^2` projections and the element-local HDG projections used in the error analysis.

use faer::prelude::*;
use faer::Mat;
use rayon::prelude::*;

use crate::error::{HdgError, Result};
use crate::fem::basis::dim_pk;
use crate::fem::{edge_basis, edge_rule, element_values, quadrature_rule, Dof, ElementValues, ReferenceBasis, SpaceLayout};
use crate::fields::{FacetField, ScalarField, TensorField, VectorField};
use crate::mesh::{Mesh, Point};
use crate::stokes::TensorStabilization;

/// Facet-wise projection onto `P_k(F)` in the trace basis `mu_j / sqrt(|F|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceProjection {
    pub degree: usize,
    pub components: usize,
    /// Index `(f * components + comp) * (degree + 1) + j`.
    pub coeffs: Vec<f64>,
}

impl TraceProjection {
    pub fn coefficient(&self, f: usize, comp: usize, j: usize) -> f64 {
        self.coeffs[(f * self.components + comp) * (self.degree + 1) + j]
    }

    /// Value at the point `a + s (b - a)` of facet `f`.
    pub fn value(&self, mesh: &Mesh, f: usize, comp: usize, s: f64) -> f64 {
        let mut mu = vec![0.0; self.degree + 1];
        edge_basis(self.degree, s, &mut mu);
        let scale = 1.0 / mesh.facets[f].length.sqrt();
        (0..=self.degree).map(|j| self.coefficient(f, comp, j) * mu[j] * scale).sum()
    }

    /// Splits the coefficients into the free trace unknowns of `x` and the eliminated Dirichlet values.
    pub fn scatter(&self, layout: &SpaceLayout, x: &mut [f64], fixed: &mut [f64]) {
        for f in 0..self.coeffs.len() / (self.components * (self.degree + 1)) {
            for comp in 0..self.components {
                for j in 0..=self.degree {
                    match layout.trace_dof(f, comp, j) {
                        Dof::Free(i) => x[i] = self.coefficient(f, comp, j),
                        Dof::Fixed(i) => fixed[i] = self.coefficient(f, comp, j),
                    }
                }
            }
        }
    }
}

/// `P_M g`: facet-wise `L^2` projection of the first `components` entries of `g` onto `P_k`.
pub fn facet_l2_project(mesh: &Mesh, k: usize, components: usize, g: &(dyn Fn(Point) -> [f64; 2] + Sync)) -> TraceProjection {
    let rule = edge_rule(2 * k + 4).expect("degree within range");
    let nt = k + 1;
    let mut coeffs = vec![0.0; mesh.num_facets() * components * nt];
    let mut mu = vec![0.0; nt];
    for f in 0..mesh.num_facets() {
        let [a, b] = mesh.facet_points(f);
        let len = mesh.facets[f].length;
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let gv = g(x);
            edge_basis(k, s, &mut mu);
            for comp in 0..components {
                for j in 0..nt {
                    coeffs[(f * components + comp) * nt + j] += w * len.sqrt() * gv[comp] * mu[j];
                }
            }
        }
    }
    TraceProjection { degree: k, components, coeffs }
}

/// Facet means of `g`, the piecewise-constant facet projection.
pub fn facet_mean(mesh: &Mesh, g: &(dyn Fn(Point) -> f64 + Sync)) -> Vec<f64> {
    let rule = edge_rule(8).expect("degree within range");
    (0..mesh.num_facets())
        .map(|f| {
            let [a, b] = mesh.facet_points(f);
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(&s, &w)| w * g([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]))
                .sum()
        })
        .collect()
}

/// Cell means of `g`, the piecewise-constant cell projection.
pub fn cell_mean(mesh: &Mesh, g: &(dyn Fn(Point) -> f64 + Sync)) -> Vec<f64> {
    let rule = quadrature_rule(8).expect("degree within range");
    (0..mesh.num_cells())
        .map(|c| {
            let map = crate::fem::AffineMap::new(mesh.cell_points(c));
            // Reference weights sum to 1/2.
            2.0 * rule.points.iter().zip(&rule.weights).map(|(x, w)| w * g(map.forward(*x))).sum::<f64>()
        })
        .collect()
}

/// Result of an HDG projection in the layout's coefficient numbering.
#[derive(Clone, Debug)]
pub struct Projection {
    /// Cell fields from the local solves and traces `P_M` of the primal variable.
    pub coeffs: Vec<f64>,
    /// `P_M` of the primal variable on the Dirichlet facets.
    pub fixed: Vec<f64>,
    /// Largest scaled residual of any moment equation over all cells.
    pub max_residual: f64,
}

/// Dense local system: `rows x n` matrix and right-hand side, rows are moment equations.
struct MomentSystem {
    a: Mat<f64>,
    b: Vec<f64>,
}

impl MomentSystem {
    fn new(n: usize) -> Self {
        MomentSystem { a: Mat::zeros(n, n), b: vec![0.0; n] }
    }

    fn solve(&self, c: usize) -> Result<(Vec<f64>, f64)> {
        let n = self.b.len();
        let sv = self.a.singular_values().map_err(|e| HdgError::Analysis(format!("cell {c}: {e:?}")))?;
        let (smax, smin) = (sv[0], sv[n - 1]);
        if !(smin > 1e-13 * smax) {
            return Err(HdgError::Analysis(format!(
                "local projection system of cell {c} is singular (condition {:.3e})",
                smax / smin
            )));
        }
        let rhs = Mat::from_fn(n, 1, |i, _| self.b[i]);
        let sol = self.a.partial_piv_lu().solve(&rhs);
        let x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        Ok((x.clone(), self.residual(&x)))
    }

    /// `max_i |A_i x - b_i| / max(|b|_inf, |A|_inf |x|_inf, 1e-300)`.
    fn residual(&self, x: &[f64]) -> f64 {
        let n = self.b.len();
        let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut amax = 0.0f64;
        let mut worst = 0.0f64;
        let mut bmax = 0.0f64;
        for i in 0..n {
            let mut s = 0.0;
            let mut row = 0.0;
            for j in 0..n {
                s += self.a[(i, j)] * x[j];
                row += self.a[(i, j)].abs();
            }
            amax = amax.max(row);
            bmax = bmax.max(self.b[i].abs());
            worst = worst.max((s - self.b[i]).abs());
        }
        worst / bmax.max(amax * xmax).max(1e-300)
    }
}

fn low_dim(k: usize) -> usize {
    if k == 0 { 0 } else { dim_pk(k - 1) }
}

fn values(mesh: &Mesh, basis: &ReferenceBasis, c: usize, k: usize) -> ElementValues {
    element_values(mesh, basis, c, &quadrature_rule(2 * k + 4).unwrap(), &edge_rule(2 * k + 4).unwrap())
}

/// `(g, phi_i)_K` for all basis functions.
fn moments(ev: &ElementValues, g: &dyn Fn(Point) -> f64) -> Vec<f64> {
    let vol = &ev.volume;
    let mut out = vec![0.0; vol.m];
    for q in 0..vol.len() {
        let gw = vol.weights[q] * g(vol.points[q]);
        for (o, p) in out.iter_mut().zip(vol.phi_at(q)) {
            *o += gw * p;
        }
    }
    out
}

/// `(Pi_V u, Pi_Q p)` from the moments against `P_{k-1}` and `<Pi_V u.n + tau Pi_Q p, lambda>_dK` for `lambda` in `P_k(dK)`.
pub fn hdg_project_poisson(
    mesh: &Mesh,
    layout: &SpaceLayout,
    u: &VectorField,
    p: &ScalarField,
    tau: &FacetField,
) -> Result<Projection> {
    let k = layout.degree;
    let (m, nt) = (layout.m, layout.nt);
    let m1 = low_dim(k);
    let basis = ReferenceBasis::new(k)?;
    let cells: Vec<Result<(Vec<f64>, f64)>> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let ev = values(mesh, &basis, c, k);
            let mut sys = MomentSystem::new(3 * m);
            let mu_a = [moments(&ev, &|x| u(x)[0]), moments(&ev, &|x| u(x)[1])];
            let mp = moments(&ev, &|x| p(x));
            let mut r = 0;
            for a in 0..2 {
                for i in 0..m1 {
                    sys.a[(r, a * m + i)] = 1.0;
                    sys.b[r] = mu_a[a][i];
                    r += 1;
                }
            }
            for i in 0..m1 {
                sys.a[(r, 2 * m + i)] = 1.0;
                sys.b[r] = mp[i];
                r += 1;
            }
            for fv in &ev.facets {
                let t = tau.value(fv.facet);
                let n = fv.normal;
                for j in 0..nt {
                    for q in 0..fv.len() {
                        let w = fv.weights[q] * fv.mu_at(q)[j];
                        let x = fv.points[q];
                        let uv = u(x);
                        sys.b[r] += w * (uv[0] * n[0] + uv[1] * n[1] + t * p(x));
                        for i in 0..m {
                            let wp = w * fv.phi_at(q)[i];
                            sys.a[(r, i)] += wp * n[0];
                            sys.a[(r, m + i)] += wp * n[1];
                            sys.a[(r, 2 * m + i)] += t * wp;
                        }
                    }
                    r += 1;
                }
            }
            debug_assert_eq!(r, 3 * m);
            sys.solve(c)
        })
        .collect();
    let mut coeffs = vec![0.0; layout.n_dofs];
    let mut fixed = vec![0.0; layout.n_fixed()];
    let mut max_residual = 0.0f64;
    for (c, res) in cells.into_iter().enumerate() {
        let (x, r) = res?;
        max_residual = max_residual.max(r);
        for i in 0..m {
            coeffs[layout.u_dof(c, 0, i)] = x[i];
            coeffs[layout.u_dof(c, 1, i)] = x[m + i];
            coeffs[layout.p_dof(c, i)] = x[2 * m + i];
        }
    }
    facet_l2_project(mesh, k, 1, &|x| [p(x), 0.0]).scatter(layout, &mut coeffs, &mut fixed);
    Ok(Projection { coeffs, fixed, max_residual })
}

/// `(Pi_Sigma sigma, Pi_V u, Pi_Q p)` from the moments against `P_{k-1}`, the trace condition on the
/// top-degree modes and `<Pi sigma n - Pi p n - S Pi u, lambda>_dK` for `lambda` in `P_k(dK)^2`.
pub fn hdg_project_stokes(
    mesh: &Mesh,
    layout: &SpaceLayout,
    sigma: &TensorField,
    u: &VectorField,
    p: &ScalarField,
    stab: &TensorStabilization,
) -> Result<Projection> {
    let k = layout.degree;
    let (m, nt) = (layout.m, layout.nt);
    let m1 = low_dim(k);
    let basis = ReferenceBasis::new(k)?;
    let sg = |a: usize, b: usize, i: usize| (2 * a + b) * m + i;
    let uu = |a: usize, i: usize| (4 + a) * m + i;
    let pp = |i: usize| 6 * m + i;
    let cells: Vec<Result<(Vec<f64>, f64)>> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let ev = values(mesh, &basis, c, k);
            let mut sys = MomentSystem::new(7 * m);
            let ms: Vec<Vec<f64>> = (0..4).map(|s| moments(&ev, &|x| sigma(x)[s / 2][s % 2])).collect();
            let mtr = moments(&ev, &|x| sigma(x)[0][0] + sigma(x)[1][1]);
            let mu_a = [moments(&ev, &|x| u(x)[0]), moments(&ev, &|x| u(x)[1])];
            let mp = moments(&ev, &|x| p(x));
            let mut r = 0;
            for s in 0..4 {
                for i in 0..m1 {
                    sys.a[(r, s * m + i)] = 1.0;
                    sys.b[r] = ms[s][i];
                    r += 1;
                }
            }
            for i in m1..m {
                sys.a[(r, sg(0, 0, i))] = 1.0;
                sys.a[(r, sg(1, 1, i))] = 1.0;
                sys.b[r] = mtr[i];
                r += 1;
            }
            for a in 0..2 {
                for i in 0..m1 {
                    sys.a[(r, uu(a, i))] = 1.0;
                    sys.b[r] = mu_a[a][i];
                    r += 1;
                }
            }
            for i in 0..m1 {
                sys.a[(r, pp(i))] = 1.0;
                sys.b[r] = mp[i];
                r += 1;
            }
            for fv in &ev.facets {
                let n = fv.normal;
                let s = stab.tensor(fv.facet, n);
                for a in 0..2 {
                    for j in 0..nt {
                        for q in 0..fv.len() {
                            let w = fv.weights[q] * fv.mu_at(q)[j];
                            let x = fv.points[q];
                            let (sv, uv, pv) = (sigma(x), u(x), p(x));
                            let mut data = -pv * n[a];
                            for b in 0..2 {
                                data += sv[a][b] * n[b] - s[a][b] * uv[b];
                            }
                            sys.b[r] += w * data;
                            for i in 0..m {
                                let wp = w * fv.phi_at(q)[i];
                                for b in 0..2 {
                                    sys.a[(r, sg(a, b, i))] += wp * n[b];
                                    sys.a[(r, uu(b, i))] -= wp * s[a][b];
                                }
                                sys.a[(r, pp(i))] -= wp * n[a];
                            }
                        }
                        r += 1;
                    }
                }
            }
            debug_assert_eq!(r, 7 * m);
            let (x, res) = sys.solve(c)?;
            // The full trace condition, including the modes implied by the sigma moments.
            let mut tr_res = 0.0f64;
            for i in 0..m {
                tr_res = tr_res.max((x[sg(0, 0, i)] + x[sg(1, 1, i)] - mtr[i]).abs());
            }
            let scale = mtr.iter().fold(1e-300f64, |s, v| s.max(v.abs())).max(x.iter().fold(0.0f64, |s, v| s.max(v.abs())));
            Ok((x, res.max(tr_res / scale)))
        })
        .collect();
    let mut coeffs = vec![0.0; layout.n_dofs];
    let mut fixed = vec![0.0; layout.n_fixed()];
    let mut max_residual = 0.0f64;
    for (c, res) in cells.into_iter().enumerate() {
        let (x, r) = res?;
        max_residual = max_residual.max(r);
        for i in 0..m {
            for s in 0..4 {
                coeffs[layout.sigma_dof(c, s, i)] = x[s * m + i];
            }
            for a in 0..2 {
                coeffs[layout.u_dof(c, a, i)] = x[uu(a, i)];
            }
            coeffs[layout.p_dof(c, i)] = x[pp(i)];
        }
    }
    facet_l2_project(mesh, k, 2, &|x| u(x)).scatter(layout, &mut coeffs, &mut fixed);
    Ok(Projection { coeffs, fixed, max_residual })
}

/// Largest violation of the cancellation properties of the Poisson projection errors
/// `e_u = u - Pi_V u`, `e_p = p - Pi_Q p`, `e_pbar = p - P_M p` against every basis function `v`, `q`:
/// `(e_p, div v)`, `<e_pbar, v.n>`, `(e_u, grad q)` and `<e_u.n + tau (e_p - e_pbar), q>`.
pub fn poisson_orthogonality(
    mesh: &Mesh,
    layout: &SpaceLayout,
    proj: &Projection,
    u: &VectorField,
    p: &ScalarField,
    tau: &FacetField,
) -> f64 {
    let k = layout.degree;
    let m = layout.m;
    let basis = ReferenceBasis::new(k).expect("degree within range");
    let pm = facet_l2_project(mesh, k, 1, &|x| [p(x), 0.0]);
    let worst: Vec<f64> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let ev = values(mesh, &basis, c, k);
            let cu: Vec<Vec<f64>> =
                (0..2).map(|a| (0..m).map(|i| proj.coeffs[layout.u_dof(c, a, i)]).collect()).collect();
            let cp: Vec<f64> = (0..m).map(|i| proj.coeffs[layout.p_dof(c, i)]).collect();
            let ev_at = |coef: &[f64], phi: &[f64]| coef.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
            let mut div_v = vec![[0.0; 2]; m];
            let mut grad_q = vec![0.0; m];
            let vol = &ev.volume;
            for q in 0..vol.len() {
                let x = vol.points[q];
                let ep = p(x) - ev_at(&cp, vol.phi_at(q));
                let uv = u(x);
                let eu = [uv[0] - ev_at(&cu[0], vol.phi_at(q)), uv[1] - ev_at(&cu[1], vol.phi_at(q))];
                for i in 0..m {
                    let g = vol.grad_at(q)[i];
                    for a in 0..2 {
                        div_v[i][a] += vol.weights[q] * ep * g[a];
                    }
                    grad_q[i] += vol.weights[q] * (eu[0] * g[0] + eu[1] * g[1]);
                }
            }
            let mut vn = vec![[0.0; 2]; m];
            let mut flux_q = vec![0.0; m];
            for fv in &ev.facets {
                let f = fv.facet;
                let t = tau.value(f);
                let [a, b] = mesh.facet_points(f);
                let len = mesh.facets[f].length;
                for q in 0..fv.len() {
                    let x = fv.points[q];
                    // Position of x along the facet in its global orientation.
                    let s = ((x[0] - a[0]) * (b[0] - a[0]) + (x[1] - a[1]) * (b[1] - a[1])) / (len * len);
                    let epbar = p(x) - pm.value(mesh, f, 0, s);
                    let ep = p(x) - ev_at(&cp, fv.phi_at(q));
                    let uv = u(x);
                    let eu = [uv[0] - ev_at(&cu[0], fv.phi_at(q)), uv[1] - ev_at(&cu[1], fv.phi_at(q))];
                    let n = fv.normal;
                    let w = fv.weights[q];
                    for i in 0..m {
                        let phi = fv.phi_at(q)[i];
                        for d in 0..2 {
                            vn[i][d] += w * epbar * phi * n[d];
                        }
                        flux_q[i] += w * (eu[0] * n[0] + eu[1] * n[1] + t * (ep - epbar)) * phi;
                    }
                }
            }
            let mut out = 0.0f64;
            for i in 0..m {
                out = out.max(div_v[i][0].abs()).max(div_v[i][1].abs());
                out = out.max(vn[i][0].abs()).max(vn[i][1].abs());
                out = out.max(grad_q[i].abs()).max(flux_q[i].abs());
            }
            out
        })
        .collect();
    worst.into_iter().fold(0.0, f64::max)
}
