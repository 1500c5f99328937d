//! Small dense complex matrices.
//!
//! Everything the receiver inverts is at most `max(N_t, N_r, N_d)` on a side
//! (a few tens at most), so a row-major `Vec` with Cholesky and
//! Gauss-Jordan routines is all that is needed. Hermitian positive-definite
//! systems go through [`CMatrix::hpd_inverse`], which adds a small diagonal
//! load when the factorization fails or is badly conditioned.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{Cx, Real};

/// Diagonal load used when a Hermitian matrix is (numerically) singular.
pub const REGULARIZATION: f64 = 1e-12;
/// Condition number above which the diagonal load is applied.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Cx<T>>,
}

/// Inverse of a Hermitian positive-definite matrix plus a flag telling
/// whether diagonal loading was needed.
#[derive(Debug, Clone)]
pub struct HpdInverse<T> {
    pub inverse: CMatrix<T>,
    pub regularized: bool,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Cx::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Cx::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Cx::new(d, T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Cx<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[Cx<T>]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            data: data.to_vec(),
        })
    }

    /// Column vector.
    pub fn column(v: &[Cx<T>]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Cx<T>] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Cx<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Adds `d[i]` to the i-th diagonal entry.
    pub fn add_diag(&self, d: &[T]) -> Self {
        debug_assert_eq!(d.len(), self.rows.min(self.cols));
        let mut out = self.clone();
        for (i, &v) in d.iter().enumerate() {
            out[(i, i)].re += v;
        }
        out
    }

    pub fn add_scalar_diag(&self, s: T) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)].re += s;
        }
        out
    }

    pub fn diag(&self) -> Vec<Cx<T>> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> Cx<T> {
        self.diag().into_iter().fold(Cx::zero(), |a, b| a + b)
    }

    pub fn mul_vec(&self, v: &[Cx<T>]) -> Result<Vec<Cx<T>>> {
        if v.len() != self.cols {
            return Err(Error::Dimension(format!(
                "matrix {}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(Cx::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect())
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    /// Returns `(self + selfᴴ) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * half
        })
    }

    /// Lower Cholesky factor of a Hermitian positive-definite matrix, or
    /// `None` if a pivot is not strictly positive.
    pub fn cholesky(&self) -> Option<Self> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = Cx::new(djj, T::zero());
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(l)
    }

    /// Inverse from a lower Cholesky factor `l` (`A = L Lᴴ`).
    fn inverse_from_cholesky(l: &Self) -> Self {
        let n = l.rows;
        // L⁻¹ by forward substitution, then A⁻¹ = L⁻ᴴ L⁻¹.
        let mut linv = Self::zeros(n, n);
        for col in 0..n {
            for i in col..n {
                let mut s: Cx<T> = if i == col { Cx::one() } else { Cx::zero() };
                for k in col..i {
                    s -= l[(i, k)] * linv[(k, col)];
                }
                linv[(i, col)] = s / l[(i, i)];
            }
        }
        let mut inv = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = Cx::zero();
                for k in i..n {
                    s += linv[(k, i)].conj() * linv[(k, j)];
                }
                inv[(i, j)] = s;
                inv[(j, i)] = s.conj();
            }
        }
        inv
    }

    /// Inverse of a Hermitian positive-definite matrix.
    ///
    /// Falls back to diagonal loading with `REGULARIZATION` (relative to the
    /// mean diagonal) when the Cholesky factorization fails or the pivot
    /// ratio exceeds `MAX_CONDITION`.
    pub fn hpd_inverse(&self) -> Result<HpdInverse<T>> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "inverse of non-square {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        if n == 0 {
            return Ok(HpdInverse {
                inverse: Self::zeros(0, 0),
                regularized: false,
            });
        }
        if let Some(l) = self.cholesky() {
            if pivot_condition(&l) <= T::lit(MAX_CONDITION) {
                return Ok(HpdInverse {
                    inverse: Self::inverse_from_cholesky(&l),
                    regularized: false,
                });
            }
        }
        let scale = (self.diag().iter().map(|d| d.re.abs()).sum::<T>() / T::lit(n as f64)).max(T::one());
        let eps = (T::lit(REGULARIZATION).max(T::epsilon() * T::lit(8.0))) * scale;
        let loaded = self.add_scalar_diag(eps);
        match loaded.cholesky() {
            Some(l) => Ok(HpdInverse {
                inverse: Self::inverse_from_cholesky(&l),
                regularized: true,
            }),
            None => Err(Error::Singular),
        }
    }

    /// General inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "inverse of non-square {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let tiny = T::epsilon() * self.max_abs().max(T::min_positive_value());
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a[(i, col)]
                        .norm()
                        .partial_cmp(&a[(j, col)].norm())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("non-empty range");
            if a[(pivot, col)].norm() <= tiny {
                return Err(Error::Singular);
            }
            if pivot != col {
                a.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            let p = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let f = a[(i, col)];
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let (acj, icj) = (a[(col, j)], inv[(col, j)]);
                    a[(i, j)] -= f * acj;
                    inv[(i, j)] -= f * icj;
                }
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        for c in 0..self.cols {
            self.data.swap(i * self.cols + c, j * self.cols + c);
        }
    }
}

fn pivot_condition<T: Real>(l: &CMatrix<T>) -> T {
    let (mut lo, mut hi) = (T::infinity(), T::zero());
    for i in 0..l.rows() {
        let d = l[(i, i)].re;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let r = hi / lo;
    r * r
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Cx<T>;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Cx<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cx<T> {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Add for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn add(self, rhs: Self) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn sub(self, rhs: Self) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<T: Real> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn mul(self, rhs: Self) -> CMatrix<T> {
        self.matmul(rhs).expect("shape mismatch in mul")
    }
}

/// `Σ conj(a_i) b_i`
pub fn dot_conj<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Cx<T> {
    a.iter().zip(b).fold(Cx::zero(), |acc, (x, y)| acc + x.conj() * y)
}

/// Squared Euclidean norm of a complex vector.
pub fn norm_sqr<T: Real>(v: &[Cx<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}
