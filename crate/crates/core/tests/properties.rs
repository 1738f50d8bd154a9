use std::sync::Arc;

use hdg_core::analysis::norms::NormKind;
use hdg_core::analysis::*;
use hdg_core::fields::{constant_tensor, FacetField, ScalarField, TensorField, VectorField};
use hdg_core::mesh::{refine_uniform, FacetTag};
use hdg_core::solver::SparseFactor;
use hdg_core::stokes::TensorStabilization;
use hdg_core::{build_layout, generate_lshape, generate_structured, CsrMatrix, Equation, HdgError, Mesh};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn jittered(n: usize, amount: f64, seed: u64) -> Mesh {
    let base = generate_structured(n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = amount / n as f64;
    let vertices = base
        .vertices
        .iter()
        .map(|v| {
            if v[0] > 1e-12 && v[0] < 1.0 - 1e-12 && v[1] > 1e-12 && v[1] < 1.0 - 1e-12 {
                [v[0] + rng.random_range(-d..=d), v[1] + rng.random_range(-d..=d)]
            } else {
                *v
            }
        })
        .collect();
    Mesh::from_parts(vertices, base.cells.clone(), &[]).unwrap()
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Mesh invariants recomputed from vertices and connectivity only.
fn assert_mesh_invariants(mesh: &Mesh, area: f64, shape_regular: bool) {
    let mut total = 0.0;
    for c in 0..mesh.num_cells() {
        let [a, b, p] = mesh.cell_points(c);
        let signed = 0.5 * ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]));
        total += signed.abs();
        let edges = [dist(a, b), dist(b, p), dist(p, a)];
        let hk = edges.iter().cloned().fold(0.0, f64::max);
        for l in 0..3 {
            let f = mesh.cell_facets[c][l].facet;
            let [x, y] = mesh.facet_points(f);
            let hf = dist(x, y);
            assert!(hf <= hk + 1e-14);
            if shape_regular {
                assert!(hk <= 2.0 * hf + 1e-14);
            }
            let n = mesh.outward_normal(c, l);
            assert!(((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() < 1e-14);
            // The normal points away from the opposite vertex.
            let mid = [(x[0] + y[0]) / 2.0, (x[1] + y[1]) / 2.0];
            let centroid = [(a[0] + b[0] + p[0]) / 3.0, (a[1] + b[1] + p[1]) / 3.0];
            assert!(n[0] * (mid[0] - centroid[0]) + n[1] * (mid[1] - centroid[1]) > 0.0);
        }
    }
    assert!((total - area).abs() <= 1e-12 * area);
    assert!((mesh.domain_area - area).abs() <= 1e-12 * area);
    let mut interior = 0;
    for (f, facet) in mesh.facets.iter().enumerate() {
        match facet.cells.len() {
            1 => assert_ne!(mesh.facet_tags[f], FacetTag::Interior),
            2 => {
                interior += 1;
                assert_eq!(mesh.facet_tags[f], FacetTag::Interior);
                let [(c0, l0), (c1, l1)] = [facet.cells[0], facet.cells[1]];
                let (n0, n1) = (mesh.outward_normal(c0, l0), mesh.outward_normal(c1, l1));
                assert!((n0[0] + n1[0]).abs() < 1e-14 && (n0[1] + n1[1]).abs() < 1e-14);
            }
            _ => panic!("facet {f} has {} cells", facet.cells.len()),
        }
    }
    let boundary = mesh.facets.iter().filter(|f| f.cells.len() == 1).count();
    assert_eq!(interior + boundary, mesh.num_facets());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_and_refined_meshes_satisfy_invariants(n in 1usize..7, jitter in 0.0f64..0.25, seed in 0u64..1000) {
        let mesh = generate_structured(n).unwrap();
        assert_mesh_invariants(&mesh, 1.0, true);
        assert_mesh_invariants(&refine_uniform(&mesh), 1.0, true);
        let mesh = jittered(n, jitter, seed);
        assert_mesh_invariants(&mesh, 1.0, false);
        let fine = refine_uniform(&mesh);
        prop_assert_eq!(fine.num_cells(), 4 * mesh.num_cells());
        assert_mesh_invariants(&fine, 1.0, false);
    }

    #[test]
    fn lshape_meshes_satisfy_invariants(half in 1usize..5) {
        let mesh = generate_lshape(2 * half).unwrap();
        assert_mesh_invariants(&mesh, 3.0, true);
        assert_mesh_invariants(&refine_uniform(&mesh), 3.0, true);
    }

    #[test]
    fn norm_is_reassembled_from_parts(k in 0usize..3, tau in 0.2f64..5.0, tn in 0.2f64..5.0, tt in 0.2f64..5.0, seed in 0u64..1000) {
        let mesh = jittered(3, 0.2, seed);
        let kappa: TensorField = constant_tensor([[2.0, 0.4], [0.4, 1.5]]);
        let kinds = [
            (Equation::Poisson, NormKind::Poisson { kappa: kappa.clone(), tau: FacetField::Uniform(tau) }),
            (Equation::Stokes, NormKind::Stokes { nu: 0.7, stab: TensorStabilization::uniform(tn, tt) }),
        ];
        for (eq, kind) in kinds {
            let layout = build_layout(&mesh, k, eq).unwrap();
            let x = random_vec(layout.n_dofs, seed + 1);
            let norm = NormEvaluator::new(&mesh, layout.clone(), kind);
            let parts = norm.parts(&x);
            let g = norm.gram();
            let quad: f64 = x.iter().zip(g.matvec(&x)).map(|(a, b)| a * b).sum();
            let total = parts.total();
            prop_assert!((total - quad).abs() <= 1e-13 * total.max(1.0), "{} {}", total, quad);
            prop_assert!((norm.norm(&x).powi(2) - total).abs() <= 1e-13 * total.max(1.0));
            prop_assert!(parts.flux >= 0.0 && parts.velocity >= 0.0 && parts.pressure >= 0.0 && parts.facet >= 0.0);
        }
    }

    #[test]
    fn facet_seminorm_scales_with_h(k in 0usize..3, s in 0.0f64..2.0, seed in 0u64..1000) {
        let mesh = jittered(4, 0.2, seed);
        let layout = build_layout(&mesh, k, Equation::Poisson).unwrap();
        let norm = NormEvaluator::new(&mesh, layout.clone(), NormKind::Poisson { kappa: constant_tensor([[1.0, 0.0], [0.0, 1.0]]), tau: FacetField::Uniform(1.3) });
        let x = random_vec(layout.n_dofs, seed);
        let fixed = random_vec(layout.n_fixed(), seed + 7);
        let h = mesh.max_h();
        prop_assert!(norm.facet_seminorm(&x, &fixed, s) <= h.powf(s) * norm.facet_seminorm(&x, &fixed, 0.0) * (1.0 + 1e-13));
    }

    #[test]
    fn equal_tensor_stabilization_collapses_to_identity_seminorm(k in 0usize..3, tau in 0.1f64..10.0, s in 0.0f64..1.0, seed in 0u64..1000) {
        let mesh = jittered(3, 0.2, seed);
        let layout = build_layout(&mesh, k, Equation::Stokes).unwrap();
        let norm = NormEvaluator::new(&mesh, layout.clone(), NormKind::Stokes { nu: 1.0, stab: TensorStabilization::uniform(tau, tau) });
        let x = random_vec(layout.n_dofs, seed);
        let fixed = random_vec(layout.n_fixed(), seed + 3);
        let a = norm.facet_seminorm(&x, &fixed, s);
        let b = tau.sqrt() * norm.identity_seminorm(&x, &fixed, s);
        prop_assert!((a - b).abs() <= 1e-13 * a.max(1.0), "{} {}", a, b);
    }

    #[test]
    fn inf_sup_is_permutation_invariant(k in 0usize..2, eq in 0usize..4, seed in 0u64..1000) {
        let name = ["poisson-smooth", "cdr-smooth", "stokes-smooth", "oseen-rotation"][eq];
        let case = case_by_name(name).unwrap();
        let stab = Stabilization::default();
        let mesh = case.mesh(2).unwrap();
        let sys = case.assemble(&mesh, k, stab).unwrap();
        let n = case.norm(&mesh, sys.layout.clone(), stab).gram();
        let m = &sys.matrix;
        let dim = m.nrows;
        let mut perm: Vec<usize> = (0..dim).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..dim).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // new index perm[i] <- old index i
        let permute = |a: &CsrMatrix| {
            let t: Vec<_> = a.triplets().into_iter().map(|(i, j, v)| (perm[i], perm[j], v)).collect();
            CsrMatrix::from_triplets(dim, dim, &t)
        };
        let c = sys.layout.constraint;
        let a = inf_sup_matrices(m, &n, c, sys.symmetric, InfSupMethod::Dense, 0).unwrap().gamma;
        let b = inf_sup_matrices(&permute(m), &permute(&n), c.map(|l| perm[l]), sys.symmetric, InfSupMethod::Dense, 0).unwrap().gamma;
        prop_assert!((a - b).abs() <= 1e-10 * a, "{} {}", a, b);
    }

    #[test]
    fn projections_of_smooth_fields(k in 0usize..3, tau in 0.3f64..4.0, tn in 0.3f64..4.0, tt in 0.3f64..4.0, w in 0.5f64..3.0, seed in 0u64..1000) {
        let mesh = jittered(3, 0.2, seed);
        let u: VectorField = Arc::new(move |x| [(w * x[0]).sin() * x[1], (w * x[1]).cos() + x[0]]);
        let p: ScalarField = Arc::new(move |x| (w * (x[0] - x[1])).exp());
        let sigma: TensorField = Arc::new(move |x| [[x[0] * x[1], (w * x[0]).cos()], [x[1].sin(), -x[0] * x[0]]]);
        let tf = FacetField::Uniform(tau);
        let layout = build_layout(&mesh, k, Equation::Poisson).unwrap();
        let proj = hdg_project_poisson(&mesh, &layout, &u, &p, &tf).unwrap();
        prop_assert!(proj.max_residual < 1e-11);
        let orth = poisson_orthogonality(&mesh, &layout, &proj, &u, &p, &tf);
        prop_assert!(orth < 1e-11, "{}", orth);
        let layout = build_layout(&mesh, k, Equation::Stokes).unwrap();
        let fp = hdg_project_stokes(&mesh, &layout, &sigma, &u, &p, &TensorStabilization::uniform(tn, tt)).unwrap();
        prop_assert!(fp.max_residual < 1e-11);
    }

    #[test]
    fn bordered_factorization_matches_plain_lu(n in 3usize..12, seed in 0u64..1000) {
        // A singular block with constant kernel (rows sum to zero), bordered by a positive constraint.
        // The cycle i -> i+1 keeps the block irreducible so the kernel is one-dimensional.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if i != j && (j == (i + 1) % n || rng.random_bool(0.5)) {
                    let v = -rng.random_range(0.1..1.0);
                    t.push((i, j, v));
                    row += v;
                }
            }
            t.push((i, i, -row));
            let c = rng.random_range(0.1..1.0);
            t.push((i, n, c));
            t.push((n, i, c));
        }
        let m = CsrMatrix::from_triplets(n + 1, n + 1, &t);
        let b = random_vec(n + 1, seed);
        if let (Ok(f), Ok(plain)) = (SparseFactor::lu_bordered(&m, n), SparseFactor::lu(&m)) {
            for (x, mat) in [(f.solve(&b), m.clone()), (f.solve_transpose(&b), m.transpose())] {
                let r = mat.matvec(&x).iter().zip(&b).fold(0.0f64, |s, (a, c)| s.max((a - c).abs()));
                let xs = x.iter().fold(1.0f64, |s, v| s.max(v.abs()));
                prop_assert!(r <= 1e-10 * xs, "{}", r);
            }
            let (x, y) = (f.solve(&b), plain.solve(&b));
            let xs = y.iter().fold(1.0f64, |s, v| s.max(v.abs()));
            prop_assert!(x.iter().zip(&y).all(|(p, q)| (p - q).abs() <= 1e-8 * xs));
        }
    }
}

#[test]
fn exact_discrete_solution_makes_both_sides_vanish() {
    // p = 1 + x - 2y and u = -grad p lie in the discrete spaces for k = 1.
    let mut case = case_by_name("poisson-smooth").unwrap();
    case.p = Arc::new(|x| 1.0 + x[0] - 2.0 * x[1]);
    case.u = Arc::new(|_| [-1.0, 2.0]);
    case.f = Arc::new(|_| 0.0);
    let stab = Stabilization::default();
    let mesh = case.mesh(3).unwrap();
    let sys = case.assemble(&mesh, 1, stab).unwrap();
    let x = hdg_core::solve(&sys).unwrap().solution;
    let proj = project_case(&case, &mesh, &sys.layout, stab).unwrap();
    let report = verify_error_bound(&case, &mesh, 1, stab, &x, &proj, 0.9).unwrap();
    for c in &report.checks {
        assert!(c.lhs < 1e-9 && c.rhs < 1e-9, "{c:?}");
    }
    assert!(report.holds());
}

#[test]
fn interface_case_satisfies_poisson_bounds() {
    let case = case_by_name("poisson-interface").unwrap();
    let mut opts = StudyOptions::new(vec![2, 4, 8]);
    opts.inf_sup = true;
    opts.verify_bounds = true;
    let r = run_convergence_study(&case, 1, &opts).unwrap();
    for l in &r.levels {
        assert!(l.bounds.as_ref().unwrap().holds(), "n={}: {:?}", l.n, l.bounds);
    }
}

#[test]
fn violated_bound_reports_both_sides() {
    let report = BoundReport { checks: vec![BoundCheck { name: "flux", lhs: 2.0, rhs: 1.0, unit_constant: false }], gamma: 1.0 };
    let err = report.into_result().unwrap_err();
    assert!(matches!(&err, HdgError::Analysis(m) if m.contains("2.0") && m.contains("1.0")), "{err}");
}

#[test]
fn rates_only_between_uniform_refinements() {
    let case = case_by_name("poisson-smooth").unwrap();
    let r = run_convergence_study(&case, 0, &StudyOptions::new(vec![2, 4, 6, 12])).unwrap();
    let rates = r.rates();
    assert!(rates[0].is_some() && rates[1].is_none() && rates[2].is_some());
    assert!(matches!(run_convergence_study(&case, 0, &StudyOptions::new(vec![2, 4])), Err(HdgError::Config(_))));
}

#[test]
fn poisson_inf_sup_trend_on_refinement() {
    let case = case_by_name("poisson-smooth").unwrap();
    let stab = Stabilization::default();
    let g: Vec<f64> = [2, 4, 8]
        .iter()
        .map(|&n| {
            let mesh = case.mesh(n).unwrap();
            let sys = case.assemble(&mesh, 1, stab).unwrap();
            estimate_inf_sup(&sys, &case.norm(&mesh, sys.layout.clone(), stab), InfSupMethod::Dense, 0).unwrap().gamma
        })
        .collect();
    assert!(g[1] / g[0] >= 0.8 && g[2] / g[1] >= 0.9, "{g:?}");
}

#[test]
fn inf_sup_dimension_cap_is_enforced() {
    let m = CsrMatrix::identity(INF_SUP_DIMENSION_CAP + 1);
    assert!(matches!(inf_sup_matrices(&m, &m, None, true, InfSupMethod::Auto, 0), Err(HdgError::Analysis(_))));
}
