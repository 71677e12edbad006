//! Dense row-major matrices and Cholesky factorization.
//!
//! The problem sizes here are a few hundred rows at most, so a compact
//! cache-friendly implementation generic over [`Scalar`] is sufficient.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row vectors; all rows must share a length.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ v`.
    pub fn t_matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * vi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix<T>) -> Matrix<T> {
        self.add(&other.scale(-T::one()))
    }

    pub fn add_to_diag(&mut self, v: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] = self[(i, i)] + v;
        }
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Replaces the matrix with `(A + Aᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        let half = T::lit(0.5);
        for i in 0..self.rows {
            for j in 0..i {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    /// Principal submatrix on the given indices.
    pub fn select(&self, idx: &[usize]) -> Matrix<T> {
        Matrix::from_fn(idx.len(), idx.len(), |i, j| self[(idx[i], idx[j])])
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
    jitter: T,
}

/// Relative jitter applied on the first retry, as a fraction of the mean diagonal.
pub const JITTER_BASE: f64 = 1e-10;
/// Number of jitter escalations (each ×10) before giving up.
pub const JITTER_RETRIES: usize = 3;

impl<T: Scalar> Cholesky<T> {
    /// Factorizes a symmetric positive-definite matrix without any regularization.
    pub fn new(a: &Matrix<T>) -> Option<Self> {
        factor(a, T::zero()).map(|l| Self { l, jitter: T::zero() })
    }

    /// Factorizes with the escalating-jitter policy: plain attempt first, then
    /// `1e-10 · mean(diag)` added to the diagonal, escalating ×10 up to three times.
    pub fn with_jitter(a: &Matrix<T>, what: &str) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::conditioning(what, "matrix is not square"));
        }
        if let Some(c) = Self::new(a) {
            return Ok(c);
        }
        let n = a.rows();
        let mean_diag = if n == 0 {
            T::zero()
        } else {
            a.diag().into_iter().sum::<T>() / T::lit(n as f64)
        };
        let mut jitter = T::lit(JITTER_BASE) * mean_diag.abs().max(T::min_positive_value());
        for _ in 0..=JITTER_RETRIES {
            if let Some(l) = factor(a, jitter) {
                return Ok(Self { l, jitter });
            }
            jitter = jitter * T::lit(10.0);
        }
        Err(Error::conditioning(
            what,
            format!("not positive definite after {JITTER_RETRIES} jitter escalations (n = {n})"),
        ))
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.l
    }

    /// Diagonal jitter that was needed for the factorization to succeed.
    pub fn jitter(&self) -> T {
        self.jitter
    }

    /// `log det A`.
    pub fn log_det(&self) -> T {
        self.l.diag().into_iter().map(|d| d.ln()).sum::<T>() * T::lit(2.0)
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] = x[i] / self.l[(i, i)];
            let xi = x[i];
            let row = self.l.row(i);
            for k in 0..i {
                x[k] = x[k] - row[k] * xi;
            }
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let bt = b.transpose();
        let mut out = Matrix::zeros(b.cols(), b.rows());
        for j in 0..b.cols() {
            let x = self.solve(bt.row(j));
            out.row_mut(j).copy_from_slice(&x);
        }
        out.transpose()
    }

    /// `L⁻¹ B` column by column.
    pub fn solve_lower_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let bt = b.transpose();
        let mut out = Matrix::zeros(b.cols(), b.rows());
        for j in 0..b.cols() {
            let x = self.solve_lower(bt.row(j));
            out.row_mut(j).copy_from_slice(&x);
        }
        out.transpose()
    }

    /// Explicit inverse `A⁻¹`.
    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim();
        // L⁻¹ is lower triangular; A⁻¹ = L⁻ᵀ L⁻¹.
        let mut linv = Matrix::zeros(n, n);
        for j in 0..n {
            linv[(j, j)] = T::one() / self.l[(j, j)];
            for i in j + 1..n {
                let row = self.l.row(i);
                let mut s = T::zero();
                for k in j..i {
                    s = s + row[k] * linv[(k, j)];
                }
                linv[(i, j)] = -s / row[i];
            }
        }
        let mut inv = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in i..n {
                    s = s + linv[(k, i)] * linv[(k, j)];
                }
                inv[(i, j)] = s;
                inv[(j, i)] = s;
            }
        }
        inv
    }

    /// `L z`, used to turn white noise into correlated draws.
    pub fn lower_mul(&self, z: &[T]) -> Vec<T> {
        (0..self.dim())
            .map(|i| dot(&self.l.row(i)[..=i], &z[..=i]))
            .collect()
    }
}

fn factor<T: Scalar>(a: &Matrix<T>, jitter: T) -> Option<Matrix<T>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = {
                let (ri, rj) = (l.row(i), l.row(j));
                dot(&ri[..j], &rj[..j])
            };
            if i == j {
                let d = a[(i, i)] + jitter - s;
                if !(d > T::zero()) || !d.is_finite() {
                    return None;
                }
                l[(i, i)] = d.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Lower factor `L` with `A ≈ L Lᵀ` for a symmetric positive semidefinite
/// matrix: pivots below `tol · max diag` are treated as zero and their
/// columns dropped. Used to draw from conditional Gaussians, which are
/// singular at points that coincide with noise-free data.
pub fn semidefinite_factor<T: Scalar>(a: &Matrix<T>, tol: T) -> Matrix<T> {
    let n = a.rows();
    let floor = tol * a.diag().into_iter().fold(T::zero(), |m, d| m.max(d));
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let d = a[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if !(d > floor) {
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let s = {
                let (ri, rj) = (l.row(i), l.row(j));
                dot(&ri[..j], &rj[..j])
            };
            l[(i, j)] = (a[(i, j)] - s) / djj;
        }
    }
    l
}

/// Solves a general square system by Gaussian elimination with partial pivoting.
pub fn solve_general<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.rows();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| {
            m[(p, col)]
                .abs()
                .partial_cmp(&m[(q, col)].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[(piv, col)].abs() <= T::epsilon() * m.max_abs() {
            return None;
        }
        if piv != col {
            for k in 0..n {
                let tmp = m[(col, k)];
                m[(col, k)] = m[(piv, k)];
                m[(piv, k)] = tmp;
            }
            x.swap(col, piv);
        }
        for r in col + 1..n {
            let f = m[(r, col)] / m[(col, col)];
            for k in col..n {
                m[(r, k)] = m[(r, k)] - f * m[(col, k)];
            }
            x[r] = x[r] - f * x[col];
        }
    }
    for i in (0..n).rev() {
        let s = (i + 1..n).fold(T::zero(), |s, k| s + m[(i, k)] * x[k]);
        x[i] = (x[i] - s) / m[(i, i)];
    }
    Some(x)
}
