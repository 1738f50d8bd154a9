//! Static condensation onto the trace unknowns and sparse direct solves.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use rayon::prelude::*;

use crate::assembly::AssembledSystem;
use crate::error::{HdgError, Result};
use crate::fem::SpaceLayout;
use crate::sparse::CsrMatrix;

pub const RESIDUAL_TOL: f64 = 1e-10;
pub const LOCAL_CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factorization {
    Cholesky,
    Lu,
}

enum Factor {
    Llt(Llt<usize, f64>, f64),
    Lu(Lu<usize, f64>),
    Bordered(Box<Bordered>),
}

/// Elimination of one dense constraint row and column of a bordered matrix `[[M, c], [r^T, d]]` whose
/// block `M` is singular with corank one: a pinned unknown and the constraint are moved into a 2x2
/// corner, the rest is factored sparsely.
struct Bordered {
    inner: SparseFactor,
    keep: Vec<usize>,
    pin: usize,
    constraint: usize,
    forward: Corner,
    transpose: Corner,
}

/// Corner data of one orientation: the kept parts of the two columns and rows, the inner solves
/// against the columns and the 2x2 Schur complement.
struct Corner {
    rows: [Vec<f64>; 2],
    y: [Vec<f64>; 2],
    schur: [[f64; 2]; 2],
}

impl Corner {
    fn new(cols: [Vec<f64>; 2], rows: [Vec<f64>; 2], corner: [[f64; 2]; 2], solve: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let y = [solve(&cols[0]), solve(&cols[1])];
        let mut schur = corner;
        for a in 0..2 {
            for b in 0..2 {
                schur[a][b] -= dotv(&rows[a], &y[b]);
            }
        }
        Corner { rows, y, schur }
    }

    fn determinant(&self) -> f64 {
        self.schur[0][0] * self.schur[1][1] - self.schur[0][1] * self.schur[1][0]
    }

    /// Kept part and the two corner unknowns of the solution, given the inner solve `y0` of the kept
    /// right-hand side and the two corner right-hand sides.
    fn finish(&self, mut y0: Vec<f64>, b: [f64; 2]) -> (Vec<f64>, [f64; 2]) {
        let g = [b[0] - dotv(&self.rows[0], &y0), b[1] - dotv(&self.rows[1], &y0)];
        let s = &self.schur;
        let det = self.determinant();
        let t = [(s[1][1] * g[0] - s[0][1] * g[1]) / det, (s[0][0] * g[1] - s[1][0] * g[0]) / det];
        for (i, v) in y0.iter_mut().enumerate() {
            *v -= self.y[0][i] * t[0] + self.y[1][i] * t[1];
        }
        (y0, t)
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sparse direct factorization reused across right-hand sides.
pub struct SparseFactor {
    n: usize,
    factor: Factor,
}

impl SparseFactor {
    /// LU with partial pivoting.
    pub fn lu(m: &CsrMatrix) -> Result<Self> {
        faer::set_global_parallelism(faer::Par::Seq);
        let lu = m
            .to_faer()
            .sp_lu()
            .map_err(|e| HdgError::Solver(format!("sparse LU failed: {e:?}")))?;
        Ok(SparseFactor { n: m.nrows, factor: Factor::Lu(lu) })
    }

    /// Cholesky of `sign * m`; fails unless that matrix is positive definite.
    pub fn cholesky(m: &CsrMatrix, sign: f64) -> Result<Self> {
        faer::set_global_parallelism(faer::Par::Seq);
        let scaled = CsrMatrix { values: m.values.iter().map(|v| sign * v).collect(), ..m.clone() };
        let llt = scaled
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| HdgError::Solver(format!("sparse Cholesky failed: {e:?}")))?;
        Ok(SparseFactor { n: m.nrows, factor: Factor::Llt(llt, sign) })
    }

    /// LU of a matrix whose row and column `constraint` are dense, e.g. a mean-value multiplier.
    ///
    /// The unknown with the largest entry in the constraint row is pinned, so that row must vanish on
    /// the kernel of the remaining block only through that unknown's direction.
    pub fn lu_bordered(m: &CsrMatrix, constraint: usize) -> Result<Self> {
        let n = m.nrows;
        let (cols, vals) = m.row(constraint);
        let pin = cols
            .iter()
            .zip(vals)
            .filter(|(&c, _)| c != constraint)
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(&c, _)| c)
            .ok_or_else(|| HdgError::Solver(format!("constraint row {constraint} is empty")))?;
        let keep: Vec<usize> = (0..n).filter(|&i| i != pin && i != constraint).collect();
        let inner = SparseFactor::lu(&m.select(&keep, &keep))?;
        let mt = m.transpose();
        let gather = |mat: &CsrMatrix, i: usize| {
            let mut dense = vec![0.0; n];
            let (cols, vals) = mat.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                dense[c] += v;
            }
            keep.iter().map(|&j| dense[j]).collect::<Vec<f64>>()
        };
        let ends = [pin, constraint];
        let rows = ends.map(|i| gather(m, i));
        let cols = ends.map(|i| gather(&mt, i));
        let corner = ends.map(|a| ends.map(|b| m.get(a, b)));
        let cornert = ends.map(|a| ends.map(|b| m.get(b, a)));
        let forward = Corner::new(cols.clone(), rows.clone(), corner, |b| inner.solve(b));
        let transpose = Corner::new(rows, cols, cornert, |b| inner.solve_transpose(b));
        let scale = m.values.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
        for c in [&forward, &transpose] {
            if !(c.determinant().abs() > 1e-14 * scale * scale) {
                return Err(HdgError::Solver(format!("bordered corner of constraint {constraint} is singular")));
            }
        }
        Ok(SparseFactor {
            n,
            factor: Factor::Bordered(Box::new(Bordered { inner, keep, pin, constraint, forward, transpose })),
        })
    }

    /// Bordered LU when `constraint` is set, falling back to plain LU.
    pub fn lu_with_constraint(m: &CsrMatrix, constraint: Option<usize>) -> Result<Self> {
        if let Some(c) = constraint {
            match SparseFactor::lu_bordered(m, c) {
                Ok(f) => return Ok(f),
                Err(e) => log::debug!("bordered factorization unavailable ({e}); using plain LU"),
            }
        }
        SparseFactor::lu(m)
    }

    pub fn kind(&self) -> Factorization {
        match self.factor {
            Factor::Llt(..) => Factorization::Cholesky,
            Factor::Lu(_) | Factor::Bordered(_) => Factorization::Lu,
        }
    }

    fn bordered_solve(&self, f: &Bordered, b: &[f64], transpose: bool) -> Vec<f64> {
        let bk: Vec<f64> = f.keep.iter().map(|&i| b[i]).collect();
        let (y0, corner) =
            if transpose { (f.inner.solve_transpose(&bk), &f.transpose) } else { (f.inner.solve(&bk), &f.forward) };
        let (xk, t) = corner.finish(y0, [b[f.pin], b[f.constraint]]);
        let mut x = vec![0.0; self.n];
        for (&i, v) in f.keep.iter().zip(xk) {
            x[i] = v;
        }
        x[f.pin] = t[0];
        x[f.constraint] = t[1];
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let (x, s) = match &self.factor {
            Factor::Llt(f, s) => (f.solve(&rhs), *s),
            Factor::Lu(f) => (f.solve(&rhs), 1.0),
            Factor::Bordered(f) => return self.bordered_solve(f, b, false),
        };
        (0..self.n).map(|i| s * x[(i, 0)]).collect()
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let (x, s) = match &self.factor {
            Factor::Llt(f, s) => (f.solve(&rhs), *s),
            Factor::Lu(f) => (f.solve_transpose(&rhs), 1.0),
            Factor::Bordered(f) => return self.bordered_solve(f, b, true),
        };
        (0..self.n).map(|i| s * x[(i, 0)]).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves with one step of iterative refinement if needed and enforces the relative residual bound.
fn checked_solve(m: &CsrMatrix, factor: &SparseFactor, b: &[f64], what: &str) -> Result<(Vec<f64>, f64)> {
    let nb = norm(b);
    let mut x = factor.solve(b);
    let mut r: Vec<f64> = m.matvec(&x).iter().zip(b).map(|(a, c)| c - a).collect();
    let mut rel = if nb > 0.0 { norm(&r) / nb } else { norm(&r) };
    for _ in 0..2 {
        if rel < 0.01 * RESIDUAL_TOL {
            break;
        }
        let dx = factor.solve(&r);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        r = m.matvec(&x).iter().zip(b).map(|(a, c)| c - a).collect();
        rel = if nb > 0.0 { norm(&r) / nb } else { norm(&r) };
    }
    if !(rel < RESIDUAL_TOL) {
        return Err(HdgError::Solver(format!("{what}: relative residual {rel:.3e} exceeds {RESIDUAL_TOL:e}")));
    }
    Ok((x, rel))
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub factorization: Factorization,
    /// `|Mx - b| / |b|` on the full assembled system.
    pub residual: f64,
}

pub fn solve_monolithic(sys: &AssembledSystem) -> Result<SolveReport> {
    let factor = SparseFactor::lu_with_constraint(&sys.matrix, sys.layout.constraint)?;
    let (x, rel) = checked_solve(&sys.matrix, &factor, &sys.rhs, "monolithic solve")?;
    Ok(SolveReport { solution: x, factorization: Factorization::Lu, residual: rel })
}

/// Unknowns kept in the global system: all free traces, and for flow problems the cell-mean
/// pressure of every cell plus the mean-value multiplier.
pub fn retained_dofs(layout: &SpaceLayout) -> Vec<usize> {
    let mut out = Vec::new();
    if layout.equation.is_flow() {
        out.extend((0..layout.n_cells).map(|c| layout.p_dof(c, 0)));
    }
    out.extend(layout.trace_offset..layout.trace_offset + layout.dim_m());
    if let Some(l) = layout.constraint {
        out.push(l);
    }
    out
}

/// Per-cell data for recovering interior unknowns from retained values.
#[derive(Clone, Debug)]
pub struct LocalRecovery {
    pub interior: Vec<usize>,
    /// Retained unknowns (global numbering) coupled to this cell.
    pub coupled: Vec<usize>,
    pub inverse: Mat<f64>,
    pub k_ig: Mat<f64>,
    /// One-norm condition number of the interior block.
    pub condition: f64,
}

#[derive(Clone, Debug)]
pub struct CondensedSystem {
    pub retained: Vec<usize>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub cells: Vec<LocalRecovery>,
    pub symmetric: bool,
    pub n_dofs: usize,
    /// Position of the mean-value multiplier among the retained unknowns.
    pub constraint: Option<usize>,
}

impl CondensedSystem {
    pub fn dim(&self) -> usize {
        self.retained.len()
    }

    pub fn max_condition(&self) -> f64 {
        self.cells.iter().map(|c| c.condition).fold(0.0, f64::max)
    }

    /// Interior unknowns of every cell from the retained values, using the original right-hand side.
    pub fn recover(&self, sys: &AssembledSystem, retained_values: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_dofs];
        for (&g, &v) in self.retained.iter().zip(retained_values) {
            x[g] = v;
        }
        let parts: Vec<Vec<f64>> = self
            .cells
            .par_iter()
            .map(|cell| {
                let ni = cell.interior.len();
                let mut r = Mat::<f64>::zeros(ni, 1);
                for (i, &d) in cell.interior.iter().enumerate() {
                    let mut s = sys.rhs[d];
                    for (j, &g) in cell.coupled.iter().enumerate() {
                        s -= cell.k_ig[(i, j)] * x[g];
                    }
                    r[(i, 0)] = s;
                }
                let y = &cell.inverse * &r;
                (0..ni).map(|i| y[(i, 0)]).collect()
            })
            .collect();
        for (cell, vals) in self.cells.iter().zip(parts) {
            for (&d, v) in cell.interior.iter().zip(vals) {
                x[d] = v;
            }
        }
        x
    }
}

fn one_norm(m: &Mat<f64>) -> f64 {
    (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn condense(sys: &AssembledSystem) -> Result<CondensedSystem> {
    faer::set_global_parallelism(faer::Par::Seq);
    let layout = &sys.layout;
    let n = layout.n_dofs;
    let retained = retained_dofs(layout);
    let mut cidx = vec![usize::MAX; n];
    for (i, &g) in retained.iter().enumerate() {
        cidx[g] = i;
    }
    let mut owner = vec![usize::MAX; n];
    let interiors: Vec<Vec<usize>> = (0..layout.n_cells)
        .map(|c| layout.cell_dofs(c).into_iter().filter(|&d| cidx[d] == usize::MAX).collect())
        .collect();
    for (c, list) in interiors.iter().enumerate() {
        for &d in list {
            owner[d] = c;
        }
    }
    let mt = sys.matrix.transpose();

    let results: Vec<Result<(LocalRecovery, Vec<(usize, usize, f64)>, Vec<(usize, f64)>)>> = interiors
        .par_iter()
        .enumerate()
        .map(|(c, interior)| {
            let ni = interior.len();
            let mut lpos = std::collections::HashMap::with_capacity(ni);
            for (i, &d) in interior.iter().enumerate() {
                lpos.insert(d, i);
            }
            let mut coupled: Vec<usize> = Vec::new();
            for &d in interior {
                for mat in [&sys.matrix, &mt] {
                    let (cols, _) = mat.row(d);
                    for &col in cols {
                        if cidx[col] != usize::MAX {
                            coupled.push(col);
                        } else if owner[col] != c {
                            return Err(HdgError::Solver(format!(
                                "unknown {d} of cell {c} couples to interior unknown {col} of cell {}",
                                owner[col]
                            )));
                        }
                    }
                }
            }
            coupled.sort_unstable();
            coupled.dedup();
            let mut gpos = std::collections::HashMap::with_capacity(coupled.len());
            for (j, &g) in coupled.iter().enumerate() {
                gpos.insert(g, j);
            }
            let ng = coupled.len();
            let mut kii = Mat::<f64>::zeros(ni, ni);
            let mut kig = Mat::<f64>::zeros(ni, ng);
            let mut kgi = Mat::<f64>::zeros(ng, ni);
            for (i, &d) in interior.iter().enumerate() {
                let (cols, vals) = sys.matrix.row(d);
                for (&col, &v) in cols.iter().zip(vals) {
                    if let Some(&j) = lpos.get(&col) {
                        kii[(i, j)] = v;
                    } else {
                        kig[(i, gpos[&col])] = v;
                    }
                }
                let (rows, vals) = mt.row(d);
                for (&row, &v) in rows.iter().zip(vals) {
                    if let Some(&j) = gpos.get(&row) {
                        kgi[(j, i)] = v;
                    }
                }
            }
            let inverse = kii.partial_piv_lu().inverse();
            let condition = one_norm(&kii) * one_norm(&inverse);
            if !(condition < LOCAL_CONDITION_LIMIT) {
                return Err(HdgError::Solver(format!(
                    "interior block of cell {c} is singular or ill-conditioned (condition {condition:.3e})"
                )));
            }
            let x = &inverse * &kig;
            let schur = &kgi * &x;
            let mut bi = Mat::<f64>::zeros(ni, 1);
            for (i, &d) in interior.iter().enumerate() {
                bi[(i, 0)] = sys.rhs[d];
            }
            let y = &kgi * (&inverse * &bi);
            let mut trip = Vec::with_capacity(ng * ng);
            for a in 0..ng {
                for b in 0..ng {
                    let v = schur[(a, b)];
                    if v != 0.0 {
                        trip.push((cidx[coupled[a]], cidx[coupled[b]], -v));
                    }
                }
            }
            let rhs: Vec<(usize, f64)> = (0..ng).map(|a| (cidx[coupled[a]], -y[(a, 0)])).collect();
            Ok((LocalRecovery { interior: interior.clone(), coupled, inverse, k_ig: kig, condition }, trip, rhs))
        })
        .collect();

    let nr = retained.len();
    let base = sys.matrix.select(&retained, &retained);
    let mut triplets = base.triplets();
    let mut rhs: Vec<f64> = retained.iter().map(|&g| sys.rhs[g]).collect();
    let mut cells = Vec::with_capacity(layout.n_cells);
    for r in results {
        let (rec, trip, r) = r?;
        triplets.extend(trip);
        for (i, v) in r {
            rhs[i] += v;
        }
        cells.push(rec);
    }
    let worst = cells.iter().map(|c| c.condition).fold(0.0, f64::max);
    log::debug!("largest interior block condition number {worst:.3e}");
    Ok(CondensedSystem {
        retained,
        matrix: CsrMatrix::from_triplets(nr, nr, &triplets),
        rhs,
        cells,
        symmetric: sys.symmetric,
        n_dofs: n,
        constraint: layout.constraint.map(|_| nr - 1),
    })
}

/// Factorizes the condensed matrix: Cholesky after sign normalization when it is symmetric and definite, LU otherwise.
pub fn factor_condensed(cs: &CondensedSystem) -> Result<SparseFactor> {
    if cs.dim() == 0 {
        return SparseFactor::lu(&cs.matrix);
    }
    if cs.symmetric {
        let diag: Vec<f64> = (0..cs.dim()).map(|i| cs.matrix.get(i, i)).collect();
        let sign = if diag.iter().all(|&d| d < 0.0) {
            Some(-1.0)
        } else if diag.iter().all(|&d| d > 0.0) {
            Some(1.0)
        } else {
            None
        };
        if let Some(s) = sign {
            if let Ok(f) = SparseFactor::cholesky(&cs.matrix, s) {
                return Ok(f);
            }
        }
    }
    SparseFactor::lu_with_constraint(&cs.matrix, cs.constraint)
}

pub fn solve_condensed(sys: &AssembledSystem, cs: &CondensedSystem) -> Result<SolveReport> {
    let factor = factor_condensed(cs)?;
    let (xg, _) = if cs.dim() == 0 {
        (Vec::new(), 0.0)
    } else {
        checked_solve(&cs.matrix, &factor, &cs.rhs, "condensed solve")?
    };
    let x = cs.recover(sys, &xg);
    let r = sys.residual(&x);
    let nb = norm(&sys.rhs);
    let rel = if nb > 0.0 { norm(&r) / nb } else { norm(&r) };
    if !(rel < RESIDUAL_TOL) {
        return Err(HdgError::Solver(format!(
            "condensed solve: relative residual {rel:.3e} of the full system exceeds {RESIDUAL_TOL:e}"
        )));
    }
    Ok(SolveReport { solution: x, factorization: factor.kind(), residual: rel })
}

/// Condense, solve the trace system and recover the interior unknowns.
pub fn solve(sys: &AssembledSystem) -> Result<SolveReport> {
    let cs = condense(sys)?;
    solve_condensed(sys, &cs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system() {
        let m = CsrMatrix::identity(4);
        let f = SparseFactor::lu(&m).unwrap();
        assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 2.0, 3.0, 4.0]);
        let c = SparseFactor::cholesky(&m, 1.0).unwrap();
        assert_eq!(c.solve(&[0.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn transpose_solve() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)]);
        let f = SparseFactor::lu(&m).unwrap();
        let x = f.solve_transpose(&[2.0, 4.0]);
        // M^T = [[2, 0], [1, 3]]
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bordered_singular_block() {
        // Rows of the 4x4 block sum to zero, so it is singular; the border restores invertibility.
        let block = [[3.0, -1.0, -2.0, 0.0], [-0.5, 2.0, -1.0, -0.5], [-1.0, 0.0, 2.5, -1.5], [0.0, -2.0, -1.0, 3.0]];
        let border = [1.0, 2.0, 0.5, 1.5];
        let mut t = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                if block[i][j] != 0.0 {
                    t.push((i, j, block[i][j]));
                }
            }
            t.push((i, 4, border[i]));
            t.push((4, i, 1.0 + i as f64));
        }
        let m = CsrMatrix::from_triplets(5, 5, &t);
        let b = [1.0, -2.0, 0.5, 3.0, 0.25];
        let f = SparseFactor::lu_bordered(&m, 4).unwrap();
        let plain = SparseFactor::lu(&m).unwrap();
        for (x, y, mat) in [(f.solve(&b), plain.solve(&b), m.clone()), (f.solve_transpose(&b), plain.solve_transpose(&b), m.transpose())] {
            let r: f64 = mat.matvec(&x).iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            assert!(r < 1e-13, "{r}");
            assert!(x.iter().zip(&y).all(|(a, c)| (a - c).abs() < 1e-12));
        }
    }
}
