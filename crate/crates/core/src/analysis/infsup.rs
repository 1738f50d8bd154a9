//! Discrete inf-sup constants `gamma_h = min_x max_y x^T M y / (|x|_N |y|_N)`.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::AssembledSystem;
use crate::error::{HdgError, Result};
use crate::solver::SparseFactor;
use crate::sparse::CsrMatrix;

use super::norms::NormEvaluator;

pub const INF_SUP_DIMENSION_CAP: usize = 20_000;
/// Above this many unknowns `Auto` switches from the dense path to Lanczos.
pub const DENSE_LIMIT: usize = 1_500;
const LANCZOS_TOL: f64 = 1e-10;
const LANCZOS_MAX_STEPS: usize = 1_500;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfSupMethod {
    /// `sigma_min(L^-1 M L^-T)` with `N = L L^T`, all dense.
    Dense,
    /// Shift-invert Lanczos in the `N` inner product with the sparse factorization of `M`.
    Lanczos,
    Auto,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfSupEstimate {
    pub gamma: f64,
    /// The path actually taken.
    pub method: InfSupMethod,
    /// Dimension of the field space after removing the pressure constraint.
    pub dim: usize,
    /// Lanczos steps; zero on the dense path.
    pub iterations: usize,
}

/// `gamma_h` of the assembled system under the composite norm of `norm`.
pub fn estimate_inf_sup(system: &AssembledSystem, norm: &NormEvaluator, method: InfSupMethod, seed: u64) -> Result<InfSupEstimate> {
    let n = norm.gram();
    inf_sup_matrices(&system.matrix, &n, system.layout.constraint, system.symmetric, method, seed)
}

/// `gamma_h` for a bilinear form `m` and Gram matrix `n`.
///
/// When `constraint` names a bordering row, `m` carries the constraint vector in that row and column,
/// the field space is the kernel of that row and `n` must vanish on it.
pub fn inf_sup_matrices(
    m: &CsrMatrix,
    n: &CsrMatrix,
    constraint: Option<usize>,
    symmetric: bool,
    method: InfSupMethod,
    seed: u64,
) -> Result<InfSupEstimate> {
    if m.nrows != m.ncols || n.nrows != m.nrows || n.ncols != m.ncols {
        return Err(HdgError::Analysis("form and Gram matrix sizes differ".into()));
    }
    let dim = m.nrows - constraint.map_or(0, |_| 1);
    if dim > INF_SUP_DIMENSION_CAP {
        return Err(HdgError::Analysis(format!(
            "inf-sup estimation of dimension {dim} exceeds the cap {INF_SUP_DIMENSION_CAP}"
        )));
    }
    let method = match method {
        InfSupMethod::Auto if dim <= DENSE_LIMIT => InfSupMethod::Dense,
        InfSupMethod::Auto => InfSupMethod::Lanczos,
        other => other,
    };
    match method {
        InfSupMethod::Dense => {
            let gamma = dense(m, n, constraint, symmetric)?;
            Ok(InfSupEstimate { gamma, method, dim, iterations: 0 })
        }
        _ => {
            let (gamma, iterations) = lanczos(m, n, constraint, symmetric, seed)?;
            Ok(InfSupEstimate { gamma, method, dim, iterations })
        }
    }
}

/// Applies the Householder reflector `I - beta v v^T` from both sides.
fn reflect(a: &mut Mat<f64>, v: &[f64], beta: f64) {
    let n = v.len();
    for j in 0..n {
        let s: f64 = (0..n).map(|i| v[i] * a[(i, j)]).sum::<f64>() * beta;
        for i in 0..n {
            a[(i, j)] -= s * v[i];
        }
    }
    for i in 0..n {
        let s: f64 = (0..n).map(|j| a[(i, j)] * v[j]).sum::<f64>() * beta;
        for j in 0..n {
            a[(i, j)] -= s * v[j];
        }
    }
}

fn drop_index(a: &Mat<f64>, r: usize) -> Mat<f64> {
    let n = a.nrows() - 1;
    let map = |i: usize| if i < r { i } else { i + 1 };
    Mat::from_fn(n, n, |i, j| a[(map(i), map(j))])
}

fn dense(m: &CsrMatrix, n: &CsrMatrix, constraint: Option<usize>, symmetric: bool) -> Result<f64> {
    faer::set_global_parallelism(faer::Par::Seq);
    let keep: Vec<usize> = (0..m.nrows).filter(|&i| Some(i) != constraint).collect();
    let mut md = m.select(&keep, &keep).to_dense();
    let mut nd = n.select(&keep, &keep).to_dense();
    if let Some(l) = constraint {
        let c: Vec<f64> = keep.iter().map(|&i| m.get(i, l)).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(HdgError::Analysis("constraint row is empty".into()));
        }
        let r = (0..c.len()).max_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs())).unwrap();
        let mut v = c.clone();
        v[r] += c[r].signum() * norm;
        let beta = 2.0 / v.iter().map(|x| x * x).sum::<f64>();
        reflect(&mut md, &v, beta);
        reflect(&mut nd, &v, beta);
        md = drop_index(&md, r);
        nd = drop_index(&nd, r);
    }
    let size = md.nrows();
    if size == 0 {
        return Err(HdgError::Analysis("empty field space".into()));
    }
    let llt = nd
        .llt(Side::Lower)
        .map_err(|e| HdgError::Analysis(format!("Gram matrix is not positive definite: {e:?}")))?;
    let l = llt.L();
    // A = L^-1 M L^-T
    let mut x = md.clone();
    l.solve_lower_triangular_in_place(x.as_mut());
    let mut y = x.transpose().to_owned();
    l.solve_lower_triangular_in_place(y.as_mut());
    let a = y.transpose().to_owned();
    let smin = if symmetric {
        let sym = Mat::from_fn(size, size, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
        let ev = sym
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| HdgError::Analysis(format!("eigenvalue iteration failed: {e:?}")))?;
        ev.iter().fold(f64::INFINITY, |s, v| s.min(v.abs()))
    } else {
        let sv = a.singular_values().map_err(|e| HdgError::Analysis(format!("SVD failed: {e:?}")))?;
        sv.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(smin)
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lanczos(m: &CsrMatrix, n: &CsrMatrix, constraint: Option<usize>, symmetric: bool, seed: u64) -> Result<(f64, usize)> {
    let dim = m.nrows;
    let field_dim = dim - constraint.map_or(0, |_| 1);
    let factor = SparseFactor::lu_with_constraint(m, constraint)?;
    let zero = |v: &mut Vec<f64>| {
        if let Some(l) = constraint {
            v[l] = 0.0;
        }
    };
    let apply = |nx: &[f64]| -> Vec<f64> {
        let mut w = if symmetric {
            factor.solve(nx)
        } else {
            let mut t = factor.solve_transpose(nx);
            zero(&mut t);
            factor.solve(&n.matvec(&t))
        };
        zero(&mut w);
        w
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    zero(&mut q);
    if let Some(l) = constraint {
        let c: Vec<f64> = (0..dim).map(|i| if i == l { 0.0 } else { m.get(i, l) }).collect();
        let s = dotv(&c, &q) / dotv(&c, &c);
        for (qi, ci) in q.iter_mut().zip(&c) {
            *qi -= s * ci;
        }
    }
    let mut nq = n.matvec(&q);
    let s = dotv(&q, &nq).sqrt();
    if !(s > 0.0) {
        return Err(HdgError::Analysis("Gram matrix is not positive definite on the start vector".into()));
    }
    q.iter_mut().for_each(|v| *v /= s);
    nq.iter_mut().for_each(|v| *v /= s);

    let mut basis = vec![q];
    let mut nbasis = vec![nq];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let max_steps = field_dim.min(LANCZOS_MAX_STEPS);
    for j in 0..max_steps {
        let mut w = apply(&nbasis[j]);
        let a = dotv(&nbasis[j], &w);
        alpha.push(a);
        for (v, x) in w.iter_mut().zip(&basis[j]) {
            *v -= a * x;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (v, x) in w.iter_mut().zip(&basis[j - 1]) {
                *v -= b * x;
            }
        }
        for _ in 0..2 {
            for i in 0..basis.len() {
                let h = dotv(&nbasis[i], &w);
                for (v, x) in w.iter_mut().zip(&basis[i]) {
                    *v -= h * x;
                }
            }
        }
        let nw = n.matvec(&w);
        let b = dotv(&w, &nw).max(0.0).sqrt();

        let size = j + 1;
        let t = Mat::from_fn(size, size, |r, c| {
            if r == c {
                alpha[r]
            } else if r == c + 1 {
                beta[c]
            } else if c == r + 1 {
                beta[r]
            } else {
                0.0
            }
        });
        let eig = t
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| HdgError::Analysis(format!("tridiagonal eigensolver failed: {e:?}")))?;
        let theta: Vec<f64> = eig.S().column_vector().iter().cloned().collect();
        let idx = (0..size).max_by(|&x, &y| theta[x].abs().total_cmp(&theta[y].abs())).unwrap();
        let top = theta[idx];
        let resid = b * eig.U()[(size - 1, idx)].abs();
        let scale = alpha.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(top.abs());
        if resid <= LANCZOS_TOL * top.abs() || b <= 1e-14 * scale || size == field_dim {
            let gamma = if symmetric { 1.0 / top.abs() } else { 1.0 / top.abs().sqrt() };
            return Ok((gamma, size));
        }
        beta.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
        nbasis.push(nw.iter().map(|v| v / b).collect());
    }
    Err(HdgError::Analysis(format!("Lanczos did not converge in {max_steps} steps")))
}
