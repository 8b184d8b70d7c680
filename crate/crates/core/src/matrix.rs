//! Dense small-matrix arithmetic and the stochastic-matrix predicates used
//! throughout the crate.
//!
//! Matrices are row-major and are expected to be small (K ≤ ~100), so every
//! routine here is a straightforward direct algorithm.

use std::fmt;
use std::io::{Read, Write};
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pivots with magnitude below this are treated as singular.
pub const PIVOT_EPS: f64 = 1e-12;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix<T>", bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

#[derive(Deserialize)]
struct RawMatrix<T> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

impl<T: Scalar> TryFrom<RawMatrix<T>> for Matrix<T> {
    type Error = Error;

    fn try_from(raw: RawMatrix<T>) -> Result<Self> {
        Matrix::from_vec(raw.rows, raw.cols, raw.entries)
    }
}

impl<T: fmt::Display> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for v in &self.entries[r * self.cols..(r + 1) * self.cols] {
                write!(f, "{:>10.6} ", v)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, entries: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim(format!("matrix must be at least 1x1, got {rows}x{cols}")));
        }
        if entries.len() != rows * cols {
            return Err(Error::dim(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "matrix entry ({}, {}) is not finite",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != m) {
            return Err(Error::dim("ragged rows"));
        }
        let entries = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_vec(n, m, entries)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be at least 1x1");
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self { rows, cols, entries }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self::from_fn(rows, cols, |_, _| value)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
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

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [T] {
        &mut self.entries
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|&v| f(v)).collect() }
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.entries[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `A Aᵀ`, the row Gramian.
    pub fn gram(&self) -> Self {
        Self::from_fn(self.rows, self.rows, |i, j| {
            self.row(i).iter().zip(self.row(j)).map(|(&a, &b)| a * b).sum()
        })
    }

    pub fn mul_vec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::dim(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dim(format!(
                "shape {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().zip(&other.entries).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn frobenius_norm(&self) -> T {
        self.entries.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.entries.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows).map(|i| self.row(i).iter().copied().sum()).collect()
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Result<Self> {
        self.require_square()?;
        let half = T::lit(0.5);
        Ok(Self::from_fn(self.rows, self.cols, |i, j| half * (self[(i, j)] + self[(j, i)])))
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows.min(self.cols) {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub(crate) fn require_square(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::dim(format!("expected square matrix, got {}x{}", self.rows, self.cols)));
        }
        Ok(())
    }

    /// Every entry ≥ −tol and every row sums to 1 within `tol`.
    pub fn is_row_stochastic(&self, tol: T) -> Result<bool> {
        self.require_square()?;
        Ok(self.entries.iter().all(|&v| v >= -tol)
            && self.row_sums().into_iter().all(|s| (s - T::one()).abs() <= tol))
    }

    /// `|M_ii| > Σ_{k≠i} |M_ik|` for every row.
    pub fn is_strictly_diag_dominant(&self) -> Result<bool> {
        self.require_square()?;
        Ok((0..self.rows).all(|i| {
            let off: T = self
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, v)| v.abs())
                .sum();
            self[(i, i)].abs() > off
        }))
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        solve_linear(self, b)
    }

    /// Dense inverse through column-by-column solves.
    pub fn inverse(&self) -> Result<Self> {
        self.require_square()?;
        let n = self.rows;
        let lu = Lu::factor(self)?;
        let mut inv = Self::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = lu.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }

    /// Infinity-norm condition number `‖A‖∞ ‖A⁻¹‖∞`; infinite when singular.
    pub fn condition_inf(&self) -> Result<T> {
        self.require_square()?;
        let norm = |m: &Self| {
            (0..m.rows)
                .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<T>())
                .fold(T::zero(), T::max)
        };
        match self.inverse() {
            Ok(inv) => Ok(norm(self) * norm(&inv)),
            Err(Error::Singular { .. }) => Ok(T::infinity()),
            Err(e) => Err(e),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for i in 0..self.rows {
            wr.write_record(self.row(i).iter().map(|v| format!("{v}")))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
        let mut rows = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>().map(T::lit).map_err(|e| Error::Parse {
                        line: line + 1,
                        message: format!("{s:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<T>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.entries[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.entries[i * self.cols + j]
    }
}

/// LU factorization with row pivoting, `P A = L U`.
struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    fn factor(a: &Matrix<T>) -> Result<Self> {
        a.require_square()?;
        let n = a.rows;
        let mut lu = a.entries.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let eps = T::lit(PIVOT_EPS);
        for k in 0..n {
            let (p, mag) = (k..n)
                .map(|r| (r, lu[r * n + k].abs()))
                .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if mag < eps {
                return Err(Error::Singular { pivot: k, magnitude: mag.as_f64() });
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for r in k + 1..n {
                let f = lu[r * n + k] / pivot;
                lu[r * n + k] = f;
                if f != T::zero() {
                    for c in k + 1..n {
                        let u = lu[k * n + c];
                        lu[r * n + c] -= f * u;
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Solves `A x = b` with partial pivoting. Fails with [`Error::Singular`]
/// when a pivot falls below [`PIVOT_EPS`] in magnitude.
pub fn solve_linear<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    a.require_square()?;
    if b.len() != a.rows {
        return Err(Error::dim(format!("{}x{} system with rhs of length {}", a.rows, a.cols, b.len())));
    }
    Ok(Lu::factor(a)?.solve(b))
}

/// Row-wise total variation distance `½ Σ_j |A_ij − B_ij|`, returned as
/// `(max, mean)` over rows.
pub fn row_tvd<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<(T, T)> {
    a.check_same_shape(b)?;
    let half = T::lit(0.5);
    let per_row: Vec<T> = (0..a.rows)
        .map(|i| half * a.row(i).iter().zip(b.row(i)).map(|(&x, &y)| (x - y).abs()).sum::<T>())
        .collect();
    let max = per_row.iter().copied().fold(T::zero(), T::max);
    let mean = per_row.iter().copied().sum::<T>() / T::from_usize(a.rows).unwrap();
    Ok((max, mean))
}

/// `½ Σ |p_i − q_i|` for two vectors of equal length.
pub fn tvd<T: Scalar>(p: &[T], q: &[T]) -> T {
    debug_assert_eq!(p.len(), q.len());
    T::lit(0.5) * p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum::<T>()
}
