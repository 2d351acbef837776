//! Dense row-major matrices and the handful of decompositions the rest of
//! the crate needs.
//!
//! Everything is `f64`. The pseudoinverse and the coefficient-of-variation
//! metrics routinely work with quantities near `1e-9`, which single
//! precision cannot hold.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default `epsilon` for [`l2_normalize_rows`].
pub const DEFAULT_L2_EPSILON: f64 = 1e-12;

/// A dense real matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Skips the finiteness scan. Used on hot paths whose inputs were
    /// already validated; callers check for divergence separately.
    pub(crate) fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_vec(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero; a 0-column matrix still has `rows` rows.
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self · other`. Panics on inner-dimension mismatch.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_t dimension mismatch");
        Self::from_fn(self.rows, other.rows, |i, j| dot(self.row(i), other.row(j)))
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "t_matmul dimension mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &bv) in out_row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mat_vec dimension mismatch");
        self.row_iter().map(|r| dot(r, v)).collect()
    }

    pub fn t_mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "t_mat_vec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, &s) in self.row_iter().zip(v) {
            axpy(s, r, &mut out);
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_vec(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self::from_vec(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self::from_vec(self.rows, self.cols, data)
    }

    pub(crate) fn add_scaled_in_place(&mut self, s: f64, other: &Self) {
        assert_eq!(self.shape(), other.shape());
        axpy(s, &other.data, &mut self.data);
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Subtracts `v` from every row.
    pub fn center_rows(&self, v: &[f64]) -> Self {
        assert_eq!(self.cols, v.len());
        let mut out = self.clone();
        for i in 0..out.rows {
            for (x, c) in out.row_mut(i).iter_mut().zip(v) {
                *x -= c;
            }
        }
        out
    }

    /// Column means.
    pub fn column_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for r in self.row_iter() {
            axpy(1.0, r, &mut mean);
        }
        let n = self.rows.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_vec(idx.len(), self.cols, data)
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RealMatrix {}x{} [", self.rows, self.cols)?;
        for r in self.row_iter() {
            writeln!(f, "  {r:?}")?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += s·x`
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Thin singular value decomposition `a = u · diag(s) · vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows × k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: RealMatrix,
    /// Descending, nonnegative, length `k`.
    pub singular_values: Vec<f64>,
    /// `cols × k` with orthonormal columns.
    pub v: RealMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> RealMatrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.singular_values) {
                *x *= s;
            }
        }
        us.matmul_t(&self.v)
    }
}

/// One-sided Jacobi SVD. Slower than bidiagonal QR but accurate on the
/// rank-deficient covariances the metrics feed it.
pub fn svd(a: &RealMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::invalid("svd of a matrix with non-finite entries"));
    }
    if a.rows() < a.cols() {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    let (m, n) = a.shape();
    if n == 0 {
        return Ok(Svd {
            u: RealMatrix::zeros(m, 0),
            singular_values: Vec::new(),
            v: RealMatrix::zeros(0, 0),
        });
    }
    // rows of `w` are columns of a; rows of `vt` are columns of v
    let mut w = a.transpose();
    let mut vt = RealMatrix::identity(n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(w.row(p), w.row(p));
                let beta = dot(w.row(q), w.row(q));
                let gamma = dot(w.row(p), w.row(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = w.row_iter().map(norm).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut ut = RealMatrix::zeros(n, m);
    let mut filled = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > 0.0 {
            ut.row_mut(k).iter_mut().zip(w.row(j)).for_each(|(o, x)| *o = x / norms[j]);
            filled.push(k);
        }
    }
    // zero singular values leave u columns free: complete the basis
    let mut e = 0;
    for k in 0..n {
        if filled.contains(&k) {
            continue;
        }
        loop {
            let mut cand = vec![0.0; m];
            cand[e % m] = 1.0;
            e += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let proj = dot(&cand, ut.row(f));
                    axpy(-proj, ut.row(f), &mut cand);
                }
            }
            let len = norm(&cand);
            if len > 0.5 {
                ut.row_mut(k).iter_mut().zip(&cand).for_each(|(o, x)| *o = x / len);
                filled.push(k);
                break;
            }
        }
    }
    Ok(Svd {
        u: ut.transpose(),
        singular_values: order.iter().map(|&j| norms[j]).collect(),
        v: RealMatrix::from_fn(n, n, |i, k| vt[(order[k], i)]),
    })
}

fn rotate_rows(m: &mut RealMatrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let (head, tail) = m.data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Moore-Penrose pseudoinverse. Singular values at or below
/// `max(rows, cols) · ε_machine · σ_max` are treated as zero.
pub fn pseudo_inverse(a: &RealMatrix) -> Result<RealMatrix> {
    let dec = svd(a)?;
    let sigma_max = dec.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = a.rows().max(a.cols()) as f64 * f64::EPSILON * sigma_max;
    let mut v_scaled = dec.v.clone();
    for i in 0..v_scaled.rows() {
        for (x, &s) in v_scaled.row_mut(i).iter_mut().zip(&dec.singular_values) {
            *x = if s > cutoff { *x / s } else { 0.0 };
        }
    }
    Ok(v_scaled.matmul_t(&dec.u))
}

/// Divides every row by `max(‖row‖₂, epsilon)`.
pub fn l2_normalize_rows(a: &RealMatrix, epsilon: f64) -> RealMatrix {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut out = a.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let scale = norm(row).max(epsilon);
        row.iter_mut().for_each(|x| *x /= scale);
    }
    out
}

/// Cholesky factor `L` (lower triangular, `a = L·Lᵀ`), or `None` when `a`
/// is not numerically positive definite.
pub fn cholesky(a: &RealMatrix) -> Option<RealMatrix> {
    if a.rows() != a.cols() || !a.is_finite() {
        return None;
    }
    nalgebra::linalg::Cholesky::new(a.to_nalgebra()).map(|c| RealMatrix::from_nalgebra(&c.l()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> RealMatrix {
        RealMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(RealMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(RealMatrix::new(1, 2, vec![1.0]).is_err());
        let bad = RealMatrix::from_vec(1, 1, vec![f64::INFINITY]);
        assert!(matches!(svd(&bad), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn svd_of_identity_and_diagonal() {
        let s = svd(&RealMatrix::identity(3)).unwrap();
        assert_eq!(s.singular_values.len(), 3);
        for v in s.singular_values {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let s = svd(&RealMatrix::from_diagonal(&[1.0, 3.0, 2.0])).unwrap();
        for (got, want) in s.singular_values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn pseudo_inverse_small_cases() {
        let p = pseudo_inverse(&RealMatrix::from_diagonal(&[2.0, 0.0])).unwrap();
        assert!(p.max_abs_diff(&m(&[&[0.5, 0.0], &[0.0, 0.0]])) < 1e-15);
        let p = pseudo_inverse(&m(&[&[2.0, 0.0], &[0.0, 4.0]])).unwrap();
        assert!(p.max_abs_diff(&m(&[&[0.5, 0.0], &[0.0, 0.25]])) < 1e-15);
    }

    #[test]
    fn pseudo_inverse_of_zero_matrix_is_zero() {
        let p = pseudo_inverse(&RealMatrix::zeros(2, 3)).unwrap();
        assert_eq!(p.shape(), (3, 2));
        assert!(p.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l2_normalize_examples() {
        let out = l2_normalize_rows(&m(&[&[3.0, 4.0], &[0.0, 0.0]]), DEFAULT_L2_EPSILON);
        assert!((out[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((out[(0, 1)] - 0.8).abs() < 1e-15);
        assert_eq!(out.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn products_agree() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let b = m(&[&[1.0, -1.0], &[0.5, 2.0]]);
        assert_eq!(a.matmul_t(&b), a.matmul(&b.transpose()));
        assert_eq!(a.t_matmul(&a), a.transpose().matmul(&a));
        assert_eq!(a.t_mat_vec(&[1.0, 1.0, 1.0]), vec![9.0, 12.0]);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]])).is_none());
        let l = cholesky(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        assert!(l.matmul_t(&l).max_abs_diff(&m(&[&[4.0, 2.0], &[2.0, 3.0]])) < 1e-14);
    }
}
