//! Small dense row-major matrices and LU solves.
//!
//! Problem sizes here are tens to a few hundred variables, so a compact
//! row-major layout with cache-friendly loops is all that is needed. The
//! layout also matches the flat `*_row_major` arrays in the file formats.

use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct DMat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DMat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch {
                what: "matrix data length",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(DMat { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// y = A x
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// y += c * (A^T x), accumulated into `y` of length `cols`.
    pub fn matvec_t_acc(&self, x: &[T], c: T, y: &mut [T]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for i in 0..self.rows {
            let xi = c * x[i];
            if xi != T::zero() {
                axpy(xi, self.row(i), y);
            }
        }
    }

    /// y = A^T x
    pub fn matvec_t(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.cols];
        self.matvec_t_acc(x, T::one(), &mut y);
        y
    }

    /// Max absolute row sum.
    pub fn inf_norm(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.rows {
            let s: T = self.row(i).iter().map(|v| v.abs()).sum();
            if s > best {
                best = s;
            }
        }
        best
    }
}

impl<T> std::ops::Index<(usize, usize)> for DMat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DMat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

// Plain multiply-add throughout: fused mul_add falls back to a library call
// on targets without guaranteed FMA codegen and ruins throughput in the
// training hot loops. The extra rounding is far below every tolerance used.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

/// y += c * x
#[inline]
pub fn axpy<T: Scalar>(c: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + c * xi;
    }
}

pub fn norm2<T: Scalar>(x: &[T]) -> T {
    dot(x, x).sqrt()
}

pub fn inf_norm_vec<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// C = A B; inner loops run over contiguous rows of B and C.
pub fn matmul_nn<T: Scalar>(a: &DMat<T>, b: &DMat<T>) -> DMat<T> {
    assert_eq!(a.cols(), b.rows());
    let mut c = DMat::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for (k, &aik) in arow.iter().enumerate() {
            if aik != T::zero() {
                axpy(aik, b.row(k), crow);
            }
        }
    }
    c
}

/// C = A B^T; each entry is a dot product of two contiguous rows.
pub fn matmul_nt<T: Scalar>(a: &DMat<T>, b: &DMat<T>) -> DMat<T> {
    assert_eq!(a.cols(), b.cols());
    let mut c = DMat::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for j in 0..b.rows() {
            crow[j] = dot(arow, b.row(j));
        }
    }
    c
}

/// C = A^T B via rank-one accumulation over the shared row index.
pub fn matmul_tn<T: Scalar>(a: &DMat<T>, b: &DMat<T>) -> DMat<T> {
    assert_eq!(a.rows(), b.rows());
    let mut c = DMat::zeros(a.cols(), b.cols());
    for i in 0..a.rows() {
        let arow = a.row(i);
        let brow = b.row(i);
        for (k, &aik) in arow.iter().enumerate() {
            if aik != T::zero() {
                axpy(aik, brow, c.row_mut(k));
            }
        }
    }
    c
}

/// LU factorization with partial pivoting of a square matrix.
///
/// Any pivot with magnitude at or below `pivot_tol` fails the factorization;
/// callers choose the threshold (rank checks use 1e-10, iterative solvers pass
/// a scale-relative value).
pub struct LuFactor<T> {
    lu: DMat<T>,
    perm: Vec<usize>,
    pub min_pivot: T,
}

impl<T: Scalar> LuFactor<T> {
    pub fn new(mut a: DMat<T>, pivot_tol: T) -> Result<Self> {
        assert_eq!(a.rows(), a.cols());
        let n = a.rows();
        let mut perm = Vec::with_capacity(n);
        let mut min_pivot = T::infinity();
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > pivot_tol) || !best.is_finite() {
                return Err(Error::Singular("lu factorization"));
            }
            if p != k {
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(p, j)];
                    a[(p, j)] = tmp;
                }
            }
            perm.push(p);
            if best < min_pivot {
                min_pivot = best;
            }
            let pivot = a[(k, k)];
            for i in k + 1..n {
                let l = a[(i, k)] / pivot;
                a[(i, k)] = l;
                if l != T::zero() {
                    let (rk, ri) = {
                        let (top, bot) = a.data.split_at_mut(i * n);
                        (&top[k * n..k * n + n], &mut bot[..n])
                    };
                    for j in k + 1..n {
                        ri[j] = ri[j] - l * rk[j];
                    }
                }
            }
        }
        Ok(LuFactor {
            lu: a,
            perm,
            min_pivot,
        })
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.perm[k]);
        }
        for i in 1..n {
            let row = self.lu.row(i);
            let mut acc = b[i];
            for j in 0..i {
                acc = acc - row[j] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut acc = b[i];
            for j in i + 1..n {
                acc = acc - row[j] * b[j];
            }
            b[i] = acc / row[i];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
