use std::sync::Arc;

use hdg_core::analysis::norms::trace_value;
use hdg_core::analysis::{case_by_name, estimate_inf_sup, Block, InfSupMethod, NormEvaluator, Stabilization};
use hdg_core::cdr::{assemble_cdr, CdrProblem};
use hdg_core::fem::{edge_rule, element_values, quadrature_rule, ReferenceBasis};
use hdg_core::fields::{constant_scalar, constant_vector, ScalarField, TensorField, VectorField};
use hdg_core::mesh::Mesh;
use hdg_core::oseen::{assemble_oseen, OseenProblem};
use hdg_core::poisson::{assemble_poisson, PoissonProblem};
use hdg_core::solver::{condense, factor_condensed, solve_condensed, solve_monolithic, Factorization};
use hdg_core::stokes::{assemble_stokes, pressure_mean_row, StokesProblem};
use hdg_core::{generate_structured, solve, AssembledSystem, Dof};

fn pair(f: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> impl Fn([f64; 2]) -> [f64; 4] + Sync {
    move |x| [f(x), 0.0, 0.0, 0.0]
}

fn vec4(u: VectorField) -> impl Fn([f64; 2]) -> [f64; 4] + Sync {
    move |x| {
        let v = u(x);
        [v[0], v[1], 0.0, 0.0]
    }
}

fn ten4(s: TensorField) -> impl Fn([f64; 2]) -> [f64; 4] + Sync {
    move |x| {
        let v = s(x);
        [v[0][0], v[0][1], v[1][0], v[1][1]]
    }
}

#[test]
fn poisson_reproduces_polynomials() {
    let mesh = generate_structured(3).unwrap();
    // k = 1: p = 1 + 2x - y; k = 2: p = x^2 + xy with div grad p = 2.
    let cases: [(usize, ScalarField, VectorField, f64); 2] = [
        (1, Arc::new(|x| 1.0 + 2.0 * x[0] - x[1]), constant_vector([-2.0, 1.0]), 0.0),
        (2, Arc::new(|x| x[0] * x[0] + x[0] * x[1]), Arc::new(|x| [-(2.0 * x[0] + x[1]), -x[0]]), 2.0),
    ];
    for (k, p, u, f) in cases {
        let mut prob = PoissonProblem::new(constant_scalar(f));
        prob.p_dirichlet = p.clone();
        let sys = assemble_poisson(&mesh, &prob, k).unwrap();
        let x = solve(&sys).unwrap().solution;
        let norm = NormEvaluator::poisson(&mesh, sys.layout.clone(), &prob);
        let pc = p.clone();
        assert!(norm.flux_error(&x, &u) < 1e-9);
        assert!(norm.l2_error(&x, Block::P, &pair(move |y| pc(y))) < 1e-9);
        assert!(norm.trace_error(&|y| [p(y), 0.0], &x, &sys.dirichlet_values, 0.0, true) < 1e-9);
    }
}

#[test]
fn cdr_reproduces_linear_solution() {
    // kappa = I, beta = (1, 1), c = 1, p = 1 - x: f = beta.grad p + c p = -x.
    let mesh = generate_structured(4).unwrap();
    let mut prob = CdrProblem::new(constant_vector([1.0, 1.0]), constant_scalar(1.0), Arc::new(|x| -x[0]));
    prob.div_beta = Some(constant_scalar(0.0));
    prob.p_dirichlet = Arc::new(|x| 1.0 - x[0]);
    let sys = assemble_cdr(&mesh, &prob, 1).unwrap();
    let x = solve(&sys).unwrap().solution;
    let norm = NormEvaluator::cdr(&mesh, sys.layout.clone(), &prob);
    assert!(norm.flux_error(&x, &constant_vector([1.0, 0.0])) < 1e-10);
    assert!(norm.l2_error(&x, Block::P, &pair(|y| 1.0 - y[0])) < 1e-10);
}

fn flow_errors(mesh: &Mesh, sys: &AssembledSystem, nu: f64, x: &[f64], u: VectorField, sigma: TensorField, p: ScalarField) -> [f64; 3] {
    let prob = StokesProblem::new(nu, constant_vector([0.0, 0.0]));
    let norm = NormEvaluator::stokes(mesh, sys.layout.clone(), &prob);
    [
        norm.l2_error(x, Block::Sigma, &ten4(sigma)),
        norm.l2_error(x, Block::U, &vec4(u)),
        norm.l2_error(x, Block::P, &pair(move |y| p(y))),
    ]
}

#[test]
fn stokes_reproduces_polynomials() {
    let mesh = generate_structured(3).unwrap();
    // u = (y^2, x^2), p = x - y, nu = 1: f = -Lap u + grad p = (-1, -3).
    let u: VectorField = Arc::new(|x| [x[1] * x[1], x[0] * x[0]]);
    let sigma: TensorField = Arc::new(|x| [[0.0, 2.0 * x[1]], [2.0 * x[0], 0.0]]);
    let p: ScalarField = Arc::new(|x| x[0] - x[1]);
    let mut prob = StokesProblem::new(1.0, constant_vector([-1.0, -3.0]));
    prob.g = u.clone();
    let sys = assemble_stokes(&mesh, &prob, 2).unwrap();
    let x = solve(&sys).unwrap().solution;
    for e in flow_errors(&mesh, &sys, 1.0, &x, u, sigma, p) {
        assert!(e < 1e-9, "{e}");
    }
}

#[test]
fn oseen_reproduces_rotation() {
    // u = (y, -x), p = 0, beta = (1, 0): f = (grad u) beta = (0, -1).
    let mesh = generate_structured(3).unwrap();
    let u: VectorField = Arc::new(|x| [x[1], -x[0]]);
    for k in 1..=2 {
        let mut prob = OseenProblem::new(1.0, constant_vector([0.0, -1.0]), constant_vector([1.0, 0.0]));
        prob.div_beta = Some(constant_scalar(0.0));
        prob.g = u.clone();
        let sys = assemble_oseen(&mesh, &prob, k).unwrap();
        let x = solve(&sys).unwrap().solution;
        let sigma: TensorField = Arc::new(|_| [[0.0, 1.0], [-1.0, 0.0]]);
        for e in flow_errors(&mesh, &sys, 1.0, &x, u.clone(), sigma, constant_scalar(0.0)) {
            assert!(e < 1e-10, "k={k}: {e}");
        }
    }
}

/// Per free trace basis function, `sum_K <u_h.n + tau (p_h - pbar_h), mu>` against `<p_N, mu>` on Neumann facets.
#[test]
fn poisson_flux_is_conserved() {
    let case = case_by_name("poisson-mixed").unwrap();
    let stab = Stabilization { tau: 1.7, ..Default::default() };
    let mesh = case.mesh(4).unwrap();
    let k = 2;
    let prob = case.poisson_problem(stab);
    let sys = assemble_poisson(&mesh, &prob, k).unwrap();
    let x = solve(&sys).unwrap().solution;
    let layout = &sys.layout;
    let basis = ReferenceBasis::new(k).unwrap();
    let (qr, er) = (quadrature_rule(2 * k + 4).unwrap(), edge_rule(2 * k + 4).unwrap());
    let mut balance = vec![0.0; layout.n_dofs];
    let mut scale = 0.0f64;
    for c in 0..mesh.num_cells() {
        let ev = element_values(&mesh, &basis, c, &qr, &er);
        for fv in &ev.facets {
            let tau = prob.tau.value(fv.facet);
            for q in 0..fv.len() {
                let phi = fv.phi_at(q);
                let at = |dof: &dyn Fn(usize) -> usize| (0..layout.m).map(|i| x[dof(i)] * phi[i]).sum::<f64>();
                let un = at(&|i| layout.u_dof(c, 0, i)) * fv.normal[0] + at(&|i| layout.u_dof(c, 1, i)) * fv.normal[1];
                let ph = at(&|i| layout.p_dof(c, i));
                let pbar: f64 = (0..layout.nt)
                    .map(|j| trace_value(layout, &x, &sys.dirichlet_values, fv.facet, 0, j) * fv.mu_at(q)[j])
                    .sum();
                let flux = un + tau * (ph - pbar);
                scale = scale.max(flux.abs());
                for j in 0..layout.nt {
                    if let Dof::Free(i) = layout.trace_dof(fv.facet, 0, j) {
                        balance[i] += fv.weights[q] * flux * fv.mu_at(q)[j];
                        if mesh.facets[fv.facet].is_boundary() {
                            balance[i] -= fv.weights[q] * (prob.p_neumann)(fv.points[q]) * fv.mu_at(q)[j];
                        }
                    }
                }
            }
        }
    }
    let worst = balance.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-10 * scale.max(1.0), "{worst}");
}

/// `sum_K <sigma_h n - p_h n - S (u_h - ubar_h), mu e_a>` vanishes on every interior facet.
#[test]
fn stokes_momentum_is_balanced_and_pressure_has_zero_mean() {
    let case = case_by_name("stokes-smooth").unwrap();
    let stab = Stabilization { tau_n: 2.0, tau_t: 0.5, ..Default::default() };
    let mesh = case.mesh(4).unwrap();
    let k = 1;
    let prob = case.stokes_problem(stab);
    let sys = assemble_stokes(&mesh, &prob, k).unwrap();
    let x = solve(&sys).unwrap().solution;
    let layout = &sys.layout;
    let basis = ReferenceBasis::new(k).unwrap();
    let (qr, er) = (quadrature_rule(2 * k + 4).unwrap(), edge_rule(2 * k + 4).unwrap());
    let mut balance = vec![0.0; layout.n_dofs];
    let mut scale = 0.0f64;
    for c in 0..mesh.num_cells() {
        let ev = element_values(&mesh, &basis, c, &qr, &er);
        for fv in &ev.facets {
            let s = prob.stab.tensor(fv.facet, fv.normal);
            let n = fv.normal;
            for q in 0..fv.len() {
                let phi = fv.phi_at(q);
                let val = |dof: &dyn Fn(usize) -> usize| (0..layout.m).map(|i| x[dof(i)] * phi[i]).sum::<f64>();
                let ph = val(&|i| layout.p_dof(c, i));
                let jump: Vec<f64> = (0..2)
                    .map(|b| {
                        let ub = (0..layout.nt)
                            .map(|j| trace_value(layout, &x, &sys.dirichlet_values, fv.facet, b, j) * fv.mu_at(q)[j])
                            .sum::<f64>();
                        val(&|i| layout.u_dof(c, b, i)) - ub
                    })
                    .collect();
                for a in 0..2 {
                    let sn = val(&|i| layout.sigma_dof(c, 2 * a, i)) * n[0] + val(&|i| layout.sigma_dof(c, 2 * a + 1, i)) * n[1];
                    let t = sn - ph * n[a] - s[a][0] * jump[0] - s[a][1] * jump[1];
                    scale = scale.max(t.abs());
                    for j in 0..layout.nt {
                        if let Dof::Free(i) = layout.trace_dof(fv.facet, a, j) {
                            balance[i] += fv.weights[q] * t * fv.mu_at(q)[j];
                        }
                    }
                }
            }
        }
    }
    let worst = balance.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-10 * scale.max(1.0), "{worst}");
    let mean: f64 = pressure_mean_row(&mesh, layout).iter().map(|&(i, w)| w * x[i]).sum();
    assert!(mean.abs() < 1e-10, "{mean}");
}

#[test]
fn oseen_trace_rows_are_satisfied() {
    let case = case_by_name("oseen-rotation").unwrap();
    let mesh = case.mesh(4).unwrap();
    let sys = case.assemble(&mesh, 2, Stabilization::default()).unwrap();
    let x = solve(&sys).unwrap().solution;
    let r = sys.residual(&x);
    let l = &sys.layout;
    let scale = sys.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let worst = r[l.trace_offset..l.trace_offset + l.dim_m()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-10 * scale, "{worst}");
}

#[test]
fn zero_beta_oseen_matches_stokes() {
    let mesh = generate_structured(3).unwrap();
    let f: VectorField = Arc::new(|x| [x[0] * x[1], 1.0 - x[0]]);
    for k in 0..=2 {
        let mut os = OseenProblem::new(0.8, f.clone(), constant_vector([0.0, 0.0]));
        os.div_beta = Some(constant_scalar(0.0));
        let st = StokesProblem::new(0.8, f.clone());
        let a = assemble_oseen(&mesh, &os, k).unwrap();
        let b = assemble_stokes(&mesh, &st, k).unwrap();
        let xa = solve(&a).unwrap().solution;
        let xb = solve(&b).unwrap().solution;
        let scale = xb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(xa.iter().zip(&xb).all(|(p, q)| (p - q).abs() <= 1e-12 * scale));
        let ga = estimate_inf_sup(&a, &NormEvaluator::oseen(&mesh, a.layout.clone(), &os), InfSupMethod::Dense, 0).unwrap().gamma;
        let gb = estimate_inf_sup(&b, &NormEvaluator::stokes(&mesh, b.layout.clone(), &st), InfSupMethod::Dense, 0).unwrap().gamma;
        assert!((ga - gb).abs() <= 1e-12 * gb, "{ga} {gb}");
    }
}

#[test]
fn cdr_matrix_is_linear_in_beta() {
    let mesh = generate_structured(3).unwrap();
    let build = |s: f64| {
        let beta: VectorField = Arc::new(move |x| [0.3 + s * x[1], 0.2 - s * x[0]]);
        let mut p = CdrProblem::new(beta, constant_scalar(1.0), constant_scalar(0.0));
        p.div_beta = Some(constant_scalar(0.0));
        assemble_cdr(&mesh, &p, 1).unwrap().matrix
    };
    let eps = 1e-3;
    let (lo, mid, hi) = (build(-eps), build(0.0), build(eps));
    let unit = build(1.0);
    // Along the rotation direction, the directional derivative equals unit - mid.
    let scale = unit.max_abs_diff(&mid);
    let combine = |a: &hdg_core::CsrMatrix, b: &hdg_core::CsrMatrix, w: f64| {
        let t: Vec<_> = a.triplets().into_iter().chain(b.triplets().into_iter().map(|(i, j, v)| (i, j, -v))).map(|(i, j, v)| (i, j, w * v)).collect();
        hdg_core::CsrMatrix::from_triplets(mid.nrows, mid.ncols, &t)
    };
    let fd = combine(&hi, &lo, 0.5 / eps);
    let dir = combine(&unit, &mid, 1.0);
    assert!(fd.max_abs_diff(&dir) <= 1e-6 * scale, "{}", fd.max_abs_diff(&dir));
}

#[test]
fn repeated_solves_are_bit_identical() {
    for name in ["poisson-smooth", "cdr-smooth", "stokes-smooth", "oseen-uniform"] {
        let case = case_by_name(name).unwrap();
        let mesh = case.mesh(4).unwrap();
        let a = case.assemble(&mesh, 1, Stabilization::default()).unwrap();
        let b = case.assemble(&mesh, 1, Stabilization::default()).unwrap();
        assert_eq!(a.matrix, b.matrix);
        let xa = solve(&a).unwrap().solution;
        let xb = solve(&b).unwrap().solution;
        assert!(xa.iter().zip(&xb).all(|(p, q)| p.to_bits() == q.to_bits()), "{name}");
    }
}

#[test]
fn condensed_dimensions_and_factorizations() {
    let mesh = generate_structured(2).unwrap();
    let sys = assemble_poisson(&mesh, &PoissonProblem::new(constant_scalar(1.0)), 1).unwrap();
    let cs = condense(&sys).unwrap();
    assert_eq!(cs.dim(), 16);
    assert_eq!(cs.dim(), sys.layout.dim_m());
    assert_eq!(factor_condensed(&cs).unwrap().kind(), Factorization::Cholesky);

    let zero = assemble_poisson(&mesh, &PoissonProblem::new(constant_scalar(0.0)), 2).unwrap();
    assert!(solve(&zero).unwrap().solution.iter().all(|v| *v == 0.0));

    let one = Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], &[]).unwrap();
    let mut prob = PoissonProblem::new(Arc::new(|x| x[0]));
    prob.p_dirichlet = Arc::new(|x| x[1]);
    let sys = assemble_poisson(&one, &prob, 2).unwrap();
    let cs = condense(&sys).unwrap();
    assert_eq!(cs.dim(), 0);
    let a = solve_condensed(&sys, &cs).unwrap().solution;
    let b = solve_monolithic(&sys).unwrap().solution;
    assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
}

#[test]
fn monolithic_and_condensed_agree_on_mixed_and_interface_cases() {
    for name in ["poisson-mixed", "poisson-interface", "poisson-anisotropic", "poisson-lshape"] {
        let case = case_by_name(name).unwrap();
        let mesh = case.mesh(4).unwrap();
        let sys = case.assemble(&mesh, 1, Stabilization::default()).unwrap();
        let a = solve_condensed(&sys, &condense(&sys).unwrap()).unwrap().solution;
        let b = solve_monolithic(&sys).unwrap().solution;
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-9 * scale), "{name}");
    }
}
