//! Small dense-matrix kernels.
//!
//! Everything here is sized for gradient matrices of maps `R^n -> R^N` with
//! `min(N, n) <= 4`: a one-sided Jacobi SVD, numerical rank under a
//! relative-plus-absolute threshold, the range/complement projection pair and
//! the 2x2 cofactor solve of the Gram system.

use serde::Serialize;

use crate::error::{Error, Result};

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    /// Builds a matrix from row-major data, rejecting empty shapes and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("empty matrix shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols,
                col: k % cols,
                value: data[k],
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(r, c, rows.iter().flat_map(|row| row.iter().copied()).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let c = cols.len();
        let r = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|col| col.len() != r) {
            return Err(Error::Dimension("columns of unequal length".into()));
        }
        let mut data = vec![0.0; r * c];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                data[i * c + j] = *v;
            }
        }
        Self::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i: usize| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ · v`.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_matvec shape mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += self[(i, j)] * vi;
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        norm(&self.data)
    }

    pub fn scaled(&self, c: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Threshold rule for numerical rank: singular values strictly above
/// `rel_tol * sigma_max + abs_tol` count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankPolicy {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        Self::analytic()
    }
}

impl RankPolicy {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Result<Self> {
        if !(rel_tol >= 0.0 && rel_tol.is_finite() && abs_tol >= 0.0 && abs_tol.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "rank tolerances must be finite and nonnegative (rel {rel_tol}, abs {abs_tol})"
            )));
        }
        Ok(Self { rel_tol, abs_tol })
    }

    /// Policy for closed-form jets.
    pub const fn analytic() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
        }
    }

    /// Suggested policy for finite-difference jets with spacing `h`; the
    /// truncation error of the stencils dominates rounding noise.
    pub fn finite_difference(h: f64) -> Self {
        Self {
            rel_tol: 1e-4 * h,
            abs_tol: 1e-12,
        }
    }

    pub fn threshold(&self, sigma_max: f64) -> f64 {
        self.rel_tol * sigma_max + self.abs_tol
    }
}

/// Thin SVD `X = U diag(sigma) Vᵀ` with `k = min(N, n)` columns in `U` and `V`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub sigma: Vec<f64>,
    pub v: Mat,
}

impl Svd {
    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn rank(&self, policy: &RankPolicy) -> usize {
        let thr = policy.threshold(self.sigma_max());
        self.sigma.iter().filter(|&&s| s > thr).count()
    }
}

const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns are orthogonalised pairwise in a fixed cyclic order, so results
/// are reproducible bit for bit.
pub fn svd_small(x: &Mat) -> Result<Svd> {
    // Re-validate in case the matrix was mutated through IndexMut.
    if let Some(k) = x.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: k / x.cols,
            col: k % x.cols,
            value: x.data[k],
        });
    }
    if x.rows >= x.cols {
        let (u, sigma, v) = jacobi_tall(x);
        Ok(Svd { u, sigma, v })
    } else {
        let (u, sigma, v) = jacobi_tall(&x.transpose());
        Ok(Svd { u: v, sigma, v: u })
    }
}

/// Jacobi on a matrix with at least as many rows as columns.
fn jacobi_tall(x: &Mat) -> (Mat, Vec<f64>, Mat) {
    let m = x.rows;
    let k = x.cols;
    let mut a: Vec<Vec<f64>> = (0..k).map(|j| x.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..k)
        .map(|j| (0..k).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = a.iter().map(|col| norm(col)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut ucols: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&j| {
            let s = norms[j];
            (s > f64::MIN_POSITIVE).then(|| a[j].iter().map(|e| e / s).collect())
        })
        .collect();
    complete_orthonormal(&mut ucols, m);
    let vcols: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();

    let ucols: Vec<Vec<f64>> = ucols.into_iter().map(Option::unwrap).collect();
    let u = Mat::from_columns(&ucols).expect("finite by construction");
    let vmat = Mat::from_columns(&vcols).expect("finite by construction");
    (u, sigma, vmat)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (ep, eq) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*ep, *eq);
        *ep = c * x - s * y;
        *eq = s * x + c * y;
    }
}

/// Fills the `None` slots with unit vectors orthogonal to every other slot.
fn complete_orthonormal(cols: &mut [Option<Vec<f64>>], m: usize) {
    for slot in 0..cols.len() {
        if cols[slot].is_some() {
            continue;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..m {
            let mut cand: Vec<f64> = (0..m).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
            for _ in 0..2 {
                for other in cols.iter().flatten() {
                    let d = dot(&cand, other);
                    for (c, o) in cand.iter_mut().zip(other) {
                        *c -= d * o;
                    }
                }
            }
            let nrm = norm(&cand);
            if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                best = Some((nrm, cand));
            }
        }
        let (nrm, cand) = best.expect("m >= number of columns");
        cols[slot] = Some(cand.into_iter().map(|c| c / nrm).collect());
    }
}

pub fn numerical_rank(x: &Mat, policy: &RankPolicy) -> Result<usize> {
    Ok(svd_small(x)?.rank(policy))
}

/// Orthogonal projections onto the range of `X` and onto its complement.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionPair {
    pub par: Mat,
    pub perp: Mat,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
}

impl ProjectionPair {
    pub fn from_svd(svd: &Svd, policy: &RankPolicy) -> Self {
        let nrows = svd.u.rows();
        let threshold = policy.threshold(svd.sigma_max());
        let rank = svd.sigma.iter().filter(|&&s| s > threshold).count();
        let mut par = Mat::zeros(nrows, nrows);
        for k in 0..rank {
            let u = svd.u.column(k);
            for i in 0..nrows {
                for j in 0..nrows {
                    par[(i, j)] += u[i] * u[j];
                }
            }
        }
        let perp = Mat::identity(nrows).sub(&par);
        Self {
            par,
            perp,
            rank,
            singular_values: svd.sigma.clone(),
            threshold,
        }
    }
}

pub fn projections(x: &Mat, policy: &RankPolicy) -> Result<ProjectionPair> {
    Ok(ProjectionPair::from_svd(&svd_small(x)?, policy))
}

/// Solves `(Duᵀ Du) x = rhs` for `n = 2` through the cofactor form of the
/// inverse, `cof(G)ᵀ / det(G)`.
pub fn gram_solve(du: &Mat, rhs: &[f64], policy: &RankPolicy) -> Result<Vec<f64>> {
    if du.cols() != 2 || rhs.len() != 2 {
        return Err(Error::Dimension(format!(
            "gram_solve needs an Nx2 gradient and a 2-vector, got {}x{} and {}",
            du.rows(),
            du.cols(),
            rhs.len()
        )));
    }
    let c0 = du.column(0);
    let c1 = du.column(1);
    let g00 = dot(&c0, &c0);
    let g01 = dot(&c0, &c1);
    let g11 = dot(&c1, &c1);
    let det = g00 * g11 - g01 * g01;
    let floor = policy.abs_tol * policy.abs_tol;
    if !(det > 0.0) || det < floor {
        return Err(Error::SingularGram { det, floor });
    }
    // cof(G) = [[g11, -g01], [-g01, g00]], symmetric, so cof(G)ᵀ = cof(G).
    Ok(vec![
        (g11 * rhs[0] - g01 * rhs[1]) / det,
        (-g01 * rhs[0] + g00 * rhs[1]) / det,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(rows).unwrap()
    }

    #[test]
    fn rejects_non_finite_with_location() {
        let err = Mat::new(2, 2, vec![1.0, 2.0, f64::NAN, 4.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 0, .. }));
        let mut x = Mat::identity(2);
        x[(0, 1)] = f64::INFINITY;
        assert!(matches!(svd_small(&x), Err(Error::NonFinite { row: 0, col: 1, .. })));
    }

    #[test]
    fn svd_unit_column() {
        let s = svd_small(&m(&[&[1.0], &[0.0]])).unwrap();
        assert_eq!(s.sigma, vec![1.0]);
        assert_eq!(s.u.column(0), vec![1.0, 0.0]);
    }

    #[test]
    fn svd_zero_matrix_has_orthonormal_factors() {
        let s = svd_small(&Mat::zeros(2, 2)).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        let utu = s.u.transpose().matmul(&s.u);
        assert!(utu.sub(&Mat::identity(2)).max_abs() < 1e-15);
    }

    #[test]
    fn svd_diagonal_sorted() {
        let s = svd_small(&m(&[&[3.0, 0.0], &[0.0, 4.0], &[0.0, 0.0]])).unwrap();
        assert!((s.sigma[0] - 4.0).abs() < 1e-15);
        assert!((s.sigma[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn svd_wide_matrix_reconstructs() {
        let x = m(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 2.0]]);
        let s = svd_small(&x).unwrap();
        assert_eq!((s.u.rows(), s.u.cols(), s.v.rows(), s.v.cols()), (2, 2, 3, 2));
        let mut us = s.u.clone();
        for i in 0..2 {
            for j in 0..2 {
                us[(i, j)] *= s.sigma[j];
            }
        }
        let back = us.matmul(&s.v.transpose());
        assert!(back.sub(&x).max_abs() < 1e-14);
    }

    #[test]
    fn rank_examples() {
        let p = RankPolicy::new(1e-10, 0.0).unwrap();
        assert_eq!(numerical_rank(&Mat::zeros(2, 2), &p).unwrap(), 0);
        assert_eq!(numerical_rank(&m(&[&[1.0, 2.0], &[2.0, 4.0]]), &p).unwrap(), 1);
        assert_eq!(numerical_rank(&m(&[&[1.0, 0.0], &[0.0, 1e-14]]), &p).unwrap(), 1);
    }

    #[test]
    fn ties_at_threshold_count_below() {
        // sigma = {1, 0.5}; threshold exactly 0.5.
        let p = RankPolicy::new(0.5, 0.0).unwrap();
        assert_eq!(numerical_rank(&m(&[&[1.0, 0.0], &[0.0, 0.5]]), &p).unwrap(), 1);
    }

    #[test]
    fn projection_examples() {
        let p = RankPolicy::analytic();
        let z = projections(&Mat::zeros(2, 1), &p).unwrap();
        assert_eq!(z.perp, Mat::identity(2));
        assert_eq!(z.rank, 0);

        let e = projections(&m(&[&[1.0], &[0.0]]), &p).unwrap();
        assert_eq!(e.par, m(&[&[1.0, 0.0], &[0.0, 0.0]]));
        assert_eq!(e.perp, m(&[&[0.0, 0.0], &[0.0, 1.0]]));

        let c = projections(&m(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]), &p).unwrap();
        assert!(c
            .perp
            .sub(&m(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]))
            .max_abs()
            < 1e-15);
    }

    #[test]
    fn gram_solve_examples() {
        let p = RankPolicy::analytic();
        let id = m(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(gram_solve(&id, &[5.0, 7.0], &p).unwrap(), vec![5.0, 7.0]);
        let d = m(&[&[2.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(gram_solve(&d, &[4.0, 1.0], &p).unwrap(), vec![1.0, 1.0]);
        // Columns (1,1), (1,0): Gram [[2,1],[1,1]].
        let g = m(&[&[1.0, 1.0], &[1.0, 0.0]]);
        let x = gram_solve(&g, &[1.0, 0.0], &p).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn gram_solve_rejects_singular() {
        let p = RankPolicy::analytic();
        let r1 = m(&[&[1.0, 2.0], &[2.0, 4.0], &[0.0, 0.0]]);
        assert!(matches!(gram_solve(&r1, &[1.0, 1.0], &p), Err(Error::SingularGram { .. })));
        assert!(matches!(
            gram_solve(&Mat::zeros(3, 1), &[1.0], &p),
            Err(Error::Dimension(_))
        ));
    }
}
