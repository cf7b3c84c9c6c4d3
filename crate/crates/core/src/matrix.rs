use std::ops::{Add, Mul};

use num_traits::{Float, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Floating-point element types the GEMM reference paths are generic over.
pub trait Scalar: Float + Send + Sync + std::fmt::Debug + 'static {
    fn from_f32(v: f32) -> Self;
}

impl Scalar for f32 {
    fn from_f32(v: f32) -> Self {
        v
    }
}

impl Scalar for f64 {
    fn from_f32(v: f32) -> Self {
        v as f64
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Like [`Matrix::from_fn`], filling elements in parallel.
    pub fn par_from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T + Sync) -> Self
    where
        T: Send,
    {
        let data = (0..rows * cols)
            .into_par_iter()
            .map(|idx| f(idx / cols.max(1), idx % cols.max(1)))
            .collect();
        Matrix { rows, cols, data }
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Matrix<U>) -> bool {
        self.shape() == other.shape()
    }
}

impl<T: Copy> Matrix<T> {
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    /// Columns `[start, end)` as a new matrix.
    pub fn col_block(&self, start: usize, end: usize) -> Matrix<T> {
        Matrix::from_fn(self.rows, end - start, |i, j| self.at(i, start + j))
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn row_block(&self, start: usize, end: usize) -> Matrix<T> {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }
}

impl<T: Clone + Zero> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self
    where
        T: num_traits::One,
    {
        Matrix::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    /// Copy padded with zero columns up to `cols`.
    pub fn pad_cols(&self, cols: usize) -> Matrix<T> {
        Matrix::from_fn(self.rows, cols, |i, j| {
            if j < self.cols {
                self.get(i, j).clone()
            } else {
                T::zero()
            }
        })
    }

    /// Copy padded with zero rows up to `rows`.
    pub fn pad_rows(&self, rows: usize) -> Matrix<T> {
        Matrix::from_fn(rows, self.cols, |i, j| {
            if i < self.rows {
                self.get(i, j).clone()
            } else {
                T::zero()
            }
        })
    }

    /// Plain sequential dot products in the element type's own arithmetic:
    /// every product and every running sum is rounded by `T`, in ascending
    /// `k`, with no fused multiply-add.
    pub fn matmul_sequential(&self, rhs: &Matrix<T>) -> Result<Matrix<T>>
    where
        T: Add<Output = T> + Mul<Output = T>,
    {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, rhs.cols, |i, j| {
            let mut acc = T::zero();
            for t in 0..self.cols {
                acc = acc + self.get(i, t).clone() * rhs.get(t, j).clone();
            }
            acc
        }))
    }
}

impl Matrix<f32> {
    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(|&v| v as f64)
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        self.map(|&v| U::from(v).expect("float-to-float cast"))
    }

    /// Frobenius norm with the sum of squares accumulated in `f64`.
    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let x = v.to_f64().unwrap_or(f64::NAN);
                x * x
            })
            .sum::<f64>()
            .sqrt()
    }
}
