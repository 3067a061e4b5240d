//! Flat parameter vectors and the small dense linear-algebra kernel shared by
//! every other module.
//!
//! All reductions run in ascending index order so results do not depend on
//! thread count or call site.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use crate::error::{Error, Result};

/// A flat, finite, fixed-length vector of model coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![0.0; dim] }
    }

    /// Wraps `values`, rejecting NaN or infinite entries.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self { values })
        } else {
            Err(Error::NonFinite("parameter vector"))
        }
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_dim(&self, other: &ParamVector) -> Result<()> {
        if self.len() == other.len() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.len(),
                found: other.len(),
            })
        }
    }

    /// `a * x + y`, elementwise.
    pub fn axpy(a: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
        y.check_dim(x)?;
        let values = x.values.iter().zip(&y.values).map(|(xi, yi)| a * xi + yi).collect();
        ParamVector::from_vec(values)
    }

    /// In-place `self += a * x`. Lengths must already agree.
    pub(crate) fn add_scaled(&mut self, a: f64, x: &ParamVector) {
        debug_assert_eq!(self.len(), x.len());
        for (s, xi) in self.values.iter_mut().zip(&x.values) {
            *s += a * xi;
        }
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_dim(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        ParamVector::from_vec(values)
    }

    pub fn scale(&self, a: f64) -> Result<ParamVector> {
        ParamVector::from_vec(self.values.iter().map(|v| a * v).collect())
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_dim(other)?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    /// Arithmetic mean of equal-length vectors, summed in slice order.
    pub fn mean<'a, I>(vectors: I) -> Result<ParamVector>
    where
        I: IntoIterator<Item = &'a ParamVector>,
    {
        let mut iter = vectors.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::invalid("vectors", "cannot average an empty list"))?;
        let mut acc = first.values.clone();
        let mut count = 1usize;
        for v in iter {
            first.check_dim(v)?;
            for (a, x) in acc.iter_mut().zip(&v.values) {
                *a += x;
            }
            count += 1;
        }
        let inv = count as f64;
        for a in &mut acc {
            *a /= inv;
        }
        ParamVector::from_vec(acc)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.values
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    libm::sqrt(a.iter().fold(0.0, |acc, x| acc + x * x))
}

/// Row-major square matrix used by quadratic objectives and closed-form solves.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                found: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut data = vec![0.0; dim * dim];
        for (i, d) in diag.iter().enumerate() {
            data[i * dim + i] = *d;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.dim).map(|i| dot(self.row(i), x)).collect()
    }

    /// Frobenius norm, an upper bound on the spectral norm.
    pub fn frobenius_norm(&self) -> f64 {
        l2_norm(&self.data)
    }

    /// Largest eigenvalue of a symmetric PSD matrix by power iteration.
    pub fn max_eigenvalue(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        // A non-axis start vector avoids starting orthogonal to the top
        // eigenvector for diagonal inputs.
        let mut v: Vec<f64> = (0..self.dim).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut estimate = 0.0;
        for _ in 0..10_000 {
            let norm = l2_norm(&v);
            if norm == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let w = self.mul_vec(&v);
            let next = dot(&v, &w);
            v = w;
            if (next - estimate).abs() <= 1e-15 * next.abs().max(1.0) {
                return next;
            }
            estimate = next;
        }
        estimate
    }

    /// Solves `self * x = rhs` for symmetric positive-definite `self` by
    /// Cholesky factorization.
    pub fn solve_spd(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        if rhs.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: rhs.len(),
            });
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::invalid("matrix", "not positive definite"));
                    }
                    l[i * n + i] = libm::sqrt(sum);
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = rhs[i];
            for k in 0..i {
                sum -= l[i * n + k] * y[k];
            }
            y[i] = sum / l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..n {
                sum -= l[k * n + i] * x[k];
            }
            x[i] = sum / l[i * n + i];
        }
        Ok(x)
    }
}
