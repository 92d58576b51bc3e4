use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from 0-based `(row, col, value)` triplets. Duplicates are summed,
    /// explicit zeros dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::input(format!(
                    "entry ({}, {}) outside a {nrows}x{ncols} matrix",
                    i + 1,
                    j + 1
                )));
            }
            if !v.is_finite() {
                return Err(Error::input(format!("non-finite entry at ({}, {})", i + 1, j + 1)));
            }
            entries.push((i, j, v));
        }
        entries.sort_by_key(|&(i, j, _)| (j, i));

        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        let mut cols = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(i);
                values.push(v);
                cols.push(j);
                last = Some((i, j));
            }
        }
        // drop zeros after summation
        let mut keep_rows = Vec::with_capacity(row_idx.len());
        let mut keep_vals = Vec::with_capacity(values.len());
        for ((i, v), j) in row_idx.into_iter().zip(values).zip(cols) {
            if v != 0.0 {
                keep_rows.push(i);
                keep_vals.push(v);
                col_ptr[j + 1] += 1;
            }
        }
        for j in 0..ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(SparseMatrix { nrows, ncols, col_ptr, row_idx: keep_rows, values: keep_vals })
    }

    /// Entries with `|v| <= drop_tol` are not stored.
    pub fn from_dense(m: &DMatrix<f64>, drop_tol: f64) -> Self {
        let mut col_ptr = Vec::with_capacity(m.ncols() + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v.abs() > drop_tol {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        SparseMatrix { nrows: m.nrows(), ncols: m.ncols(), col_ptr, row_idx, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(row, value)` pairs of column `j` in increasing row order.
    pub fn column_iter(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// All stored entries as 0-based `(row, col, value)`, column-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| self.column_iter(j).map(move |(i, v)| (i, j, v)))
    }

    pub fn column_dense(&self, j: usize) -> DVector<f64> {
        let mut c = DVector::zeros(self.nrows);
        for (i, v) in self.column_iter(j) {
            c[i] = v;
        }
        c
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn select_columns(&self, indices: &[usize]) -> SparseMatrix {
        let mut col_ptr = Vec::with_capacity(indices.len() + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for &j in indices {
            for (i, v) in self.column_iter(j) {
                row_idx.push(i);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        SparseMatrix { nrows: self.nrows, ncols: indices.len(), col_ptr, row_idx, values }
    }

    pub fn scaled(&self, c: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows);
        for j in 0..self.ncols {
            let xj = x[j];
            if xj != 0.0 {
                for (i, v) in self.column_iter(j) {
                    y[i] += v * xj;
                }
            }
        }
        y
    }

    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.ncols,
            (0..self.ncols).map(|j| self.column_iter(j).map(|(i, v)| v * y[i]).sum::<f64>()),
        )
    }
}
