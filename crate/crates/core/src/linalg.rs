// SPDX-License-Identifier: Apache-2.0

//! Row-major dense matrices in double precision.
//!
//! Products parallelize over output rows only, so every entry is computed by
//! the same sequential loop regardless of the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows below this count are multiplied on the calling thread.
const PAR_ROWS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "Mat::from_vec",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "Mat::from_rows",
                    expected: cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::row_vector(vec![value])
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(idx.len(), self.cols);
        for (dst, &src) in idx.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[&Mat]) -> Result<Mat> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::DimensionMismatch {
                    context: "Mat::vstack",
                    expected: cols,
                    got: m.cols,
                });
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column means over the rows.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        for m in &mut means {
            *m /= n;
        }
        means
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, other: &Mat, alpha: f64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    fn check_inner(&self, other_dim: usize, context: &'static str) -> Result<()> {
        if self.cols != other_dim {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.cols,
                got: other_dim,
            });
        }
        Ok(())
    }

    /// `self · other`
    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        self.check_inner(other.rows, "matmul")?;
        let (n, m) = (self.rows, other.cols);
        let mut out = Mat::zeros(n, m);
        let kernel = |(r, out_row): (usize, &mut [f64])| {
            let a = self.row(r);
            for (k, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                for (o, &bv) in out_row.iter_mut().zip(other.row(k)) {
                    *o += av * bv;
                }
            }
        };
        if m == 0 {
            return Ok(out);
        }
        if n >= PAR_ROWS {
            out.data.par_chunks_mut(m).enumerate().for_each(kernel);
        } else {
            out.data.chunks_mut(m).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `self · otherᵀ`. Goes through an explicit transpose so the inner
    /// loop is the vectorizable row update of [`Mat::matmul`].
    pub fn matmul_bt(&self, other: &Mat) -> Result<Mat> {
        self.check_inner(other.cols, "matmul_bt")?;
        self.matmul(&other.transpose())
    }

    /// `selfᵀ · other`
    pub fn matmul_at(&self, other: &Mat) -> Result<Mat> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul_at",
                expected: self.rows,
                got: other.rows,
            });
        }
        self.transpose().matmul(other)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        let mut out = Mat::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn ramp(rows: usize, cols: usize, shift: f64) -> Mat {
        let data = (0..rows * cols)
            .map(|i| ((i as f64) * 0.37 + shift).sin())
            .collect();
        Mat::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn products_agree_with_triple_loop() {
        for &n in &[3, 70] {
            let a = ramp(n, 5, 0.1);
            let b = ramp(5, 4, 0.7);
            let expect = naive(&a, &b);
            let got = a.matmul(&b).unwrap();
            for (x, y) in got.data().iter().zip(expect.data()) {
                assert!((x - y).abs() < 1e-12);
            }
            let bt = b.transpose();
            let got = a.matmul_bt(&bt).unwrap();
            for (x, y) in got.data().iter().zip(expect.data()) {
                assert!((x - y).abs() < 1e-12);
            }
            let c = ramp(n, 4, 0.3);
            let expect = naive(&a.transpose(), &c);
            let got = a.matmul_at(&c).unwrap();
            for (x, y) in got.data().iter().zip(expect.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let a = Mat::zeros(2, 3);
        assert!(a.matmul(&Mat::zeros(2, 2)).is_err());
        assert!(Mat::from_vec(2, 2, vec![1.0]).is_err());
        assert!(Mat::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn column_means_and_norms() {
        let m = Mat::from_rows(&[vec![1.0, 0.0], vec![3.0, 2.0]]).unwrap();
        assert_eq!(m.column_means(), vec![2.0, 1.0]);
        assert!((m.frobenius_norm() - 14f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.transpose().row(0), &[1.0, 3.0]);
    }
}
