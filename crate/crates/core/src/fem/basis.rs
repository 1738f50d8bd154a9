//! Hierarchical orthonormal polynomial bases on the reference triangle and the unit edge.

use super::quadrature::{edge_rule, quadrature_rule};
use crate::error::{HdgError, Result};

pub const MAX_ORDER: usize = 4;

/// Number of polynomials of total degree at most `k` in two variables.
pub fn dim_pk(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Shifted Legendre polynomials `P_j(2t - 1)` and their derivatives in `t`, for `j <= n`.
fn shifted_legendre(n: usize, t: f64, val: &mut [f64], der: &mut [f64]) {
    let s = 2.0 * t - 1.0;
    val[0] = 1.0;
    der[0] = 0.0;
    if n == 0 {
        return;
    }
    val[1] = s;
    der[1] = 2.0;
    for j in 1..n {
        let jf = j as f64;
        val[j + 1] = ((2.0 * jf + 1.0) * s * val[j] - jf * val[j - 1]) / (jf + 1.0);
        der[j + 1] = der[j - 1] + 2.0 * (2.0 * jf + 1.0) * val[j];
    }
}

/// Modal basis of `P_k` on the reference triangle, orthonormal in `L^2` and nested by degree:
/// the first `dim_pk(j)` functions span `P_j`.
#[derive(Clone, Debug)]
pub struct ReferenceBasis {
    pub degree: usize,
    /// Exponent pairs of the Legendre products `P_a(2x-1) P_b(2y-1)` the basis is expanded in.
    pairs: Vec<(usize, usize)>,
    /// Row `i` holds the expansion coefficients of basis function `i`.
    coeffs: Vec<f64>,
    /// Condition number of the Gram matrix of the starting products.
    pub gram_condition: f64,
}

impl ReferenceBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > MAX_ORDER {
            return Err(HdgError::Config(format!(
                "polynomial degree {degree} is outside the supported range 0..={MAX_ORDER}"
            )));
        }
        let m = dim_pk(degree);
        let pairs: Vec<(usize, usize)> =
            (0..=degree).flat_map(|d| (0..=d).map(move |b| (d - b, b))).collect();
        let rule = quadrature_rule(2 * degree)?;
        let nq = rule.len();
        let mut lx = vec![0.0; degree + 1];
        let mut ly = vec![0.0; degree + 1];
        let mut dx = vec![0.0; degree + 1];
        let mut dy = vec![0.0; degree + 1];
        // values[i * nq + q] of the starting products
        let mut values = vec![0.0; m * nq];
        for (q, p) in rule.points.iter().enumerate() {
            shifted_legendre(degree, p[0], &mut lx, &mut dx);
            shifted_legendre(degree, p[1], &mut ly, &mut dy);
            for (i, &(a, b)) in pairs.iter().enumerate() {
                values[i * nq + q] = lx[a] * ly[b];
            }
        }
        let dot = |u: &[f64], v: &[f64]| -> f64 {
            u.iter().zip(v).zip(&rule.weights).map(|((a, b), w)| a * b * w).sum()
        };

        let gram = faer::Mat::<f64>::from_fn(m, m, |i, j| {
            dot(&values[i * nq..(i + 1) * nq], &values[j * nq..(j + 1) * nq])
        });
        let ev = gram
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|_| HdgError::Analysis("basis Gram eigen-solve failed".into()))?;
        let gram_condition = ev[m - 1] / ev[0];
        log::debug!("degree {degree} basis Gram condition number {gram_condition:.3e}");

        let mut coeffs = vec![0.0; m * m];
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(m);
        for i in 0..m {
            let mut v = values[i * nq..(i + 1) * nq].to_vec();
            let mut c = vec![0.0; m];
            c[i] = 1.0;
            for _ in 0..2 {
                for j in 0..i {
                    let r = dot(&v, &ortho[j]);
                    for (vq, oq) in v.iter_mut().zip(&ortho[j]) {
                        *vq -= r * oq;
                    }
                    for l in 0..m {
                        c[l] -= r * coeffs[j * m + l];
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            for vq in v.iter_mut() {
                *vq /= norm;
            }
            for l in 0..m {
                coeffs[i * m + l] = c[l] / norm;
            }
            ortho.push(v);
        }
        Ok(ReferenceBasis { degree, pairs, coeffs, gram_condition })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Values and reference gradients of every basis function at `x`.
    pub fn eval_into(&self, x: [f64; 2], vals: &mut [f64], grads: &mut [[f64; 2]]) {
        let k = self.degree;
        let mut lx = [0.0; MAX_ORDER + 1];
        let mut ly = [0.0; MAX_ORDER + 1];
        let mut dx = [0.0; MAX_ORDER + 1];
        let mut dy = [0.0; MAX_ORDER + 1];
        shifted_legendre(k, x[0], &mut lx, &mut dx);
        shifted_legendre(k, x[1], &mut ly, &mut dy);
        let m = self.len();
        let mut pv = [0.0; 15];
        let mut pg = [[0.0; 2]; 15];
        for (l, &(a, b)) in self.pairs.iter().enumerate() {
            pv[l] = lx[a] * ly[b];
            pg[l] = [dx[a] * ly[b], lx[a] * dy[b]];
        }
        for i in 0..m {
            let row = &self.coeffs[i * m..(i + 1) * m];
            let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for l in 0..=i {
                v += row[l] * pv[l];
                gx += row[l] * pg[l][0];
                gy += row[l] * pg[l][1];
            }
            vals[i] = v;
            grads[i] = [gx, gy];
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let mut v = vec![0.0; self.len()];
        let mut g = vec![[0.0; 2]; self.len()];
        self.eval_into(x, &mut v, &mut g);
        (v, g)
    }
}

/// Orthonormal Legendre basis of `P_k` on `[0, 1]`: `sqrt(2j+1) P_j(2s-1)`.
pub fn edge_basis(k: usize, s: f64, vals: &mut [f64]) {
    let mut v = [0.0; MAX_ORDER + 2];
    let mut d = [0.0; MAX_ORDER + 2];
    shifted_legendre(k, s, &mut v, &mut d);
    for j in 0..=k {
        vals[j] = ((2 * j + 1) as f64).sqrt() * v[j];
    }
}

/// Gram matrix of the edge basis under an exact rule, used by tests and diagnostics.
pub fn edge_gram(k: usize) -> Result<Vec<f64>> {
    let rule = edge_rule(2 * k)?;
    let mut g = vec![0.0; (k + 1) * (k + 1)];
    let mut v = vec![0.0; k + 1];
    for (&s, &w) in rule.points.iter().zip(&rule.weights) {
        edge_basis(k, s, &mut v);
        for i in 0..=k {
            for j in 0..=k {
                g[i * (k + 1) + j] += w * v[i] * v[j];
            }
        }
    }
    Ok(g)
}
