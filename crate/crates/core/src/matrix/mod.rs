//! Data matrix container, SVD, low-rank approximation and the reduced
//! embedding fed to the ellipsoid solver.
//!
//! Data points are the *columns* of a `d x m` matrix. Dense storage is a
//! column-major [`nalgebra::DMatrix`]; sparse storage is compressed sparse
//! column.

pub mod io;
mod sparse;
mod svd;

pub use sparse::SparseMatrix;
pub use svd::{
    best_rank_r, numerical_rank, rank_threshold, reduce, svd, truncated_svd, ReducedEmbedding,
    SvdFactors, SPARSE_DENSE_CUTOFF,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DataMatrix {
    Dense(DMatrix<f64>),
    Sparse(SparseMatrix),
}

impl DataMatrix {
    /// Wraps a dense matrix after checking shape and finiteness.
    pub fn dense(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::input("matrix must have at least one row and one column"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::input(format!("non-finite entry at ({}, {})", i + 1, j + 1)));
        }
        Ok(DataMatrix::Dense(values))
    }

    pub fn sparse(values: SparseMatrix) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::input("matrix must have at least one row and one column"));
        }
        if values.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite entry in sparse matrix"));
        }
        Ok(DataMatrix::Sparse(values))
    }

    pub fn nrows(&self) -> usize {
        match self {
            DataMatrix::Dense(m) => m.nrows(),
            DataMatrix::Sparse(s) => s.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            DataMatrix::Dense(m) => m.ncols(),
            DataMatrix::Sparse(s) => s.ncols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, DataMatrix::Sparse(_))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            DataMatrix::Dense(m) => m.clone(),
            DataMatrix::Sparse(s) => s.to_dense(),
        }
    }

    /// Borrowed dense view when the storage is already dense.
    pub fn as_dense(&self) -> Option<&DMatrix<f64>> {
        match self {
            DataMatrix::Dense(m) => Some(m),
            DataMatrix::Sparse(_) => None,
        }
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        match self {
            DataMatrix::Dense(m) => m.column(j).into_owned(),
            DataMatrix::Sparse(s) => s.column_dense(j),
        }
    }

    /// Dense copy of the columns listed in `indices`, in that order.
    pub fn select_columns(&self, indices: &[usize]) -> DMatrix<f64> {
        let d = self.nrows();
        let mut out = DMatrix::zeros(d, indices.len());
        for (k, &j) in indices.iter().enumerate() {
            match self {
                DataMatrix::Dense(m) => out.column_mut(k).copy_from(&m.column(j)),
                DataMatrix::Sparse(s) => {
                    for (i, v) in s.column_iter(j) {
                        out[(i, k)] = v;
                    }
                }
            }
        }
        out
    }

    /// Columns listed in `indices`, keeping the storage kind.
    pub fn subset_columns(&self, indices: &[usize]) -> DataMatrix {
        match self {
            DataMatrix::Dense(_) => DataMatrix::Dense(self.select_columns(indices)),
            DataMatrix::Sparse(s) => DataMatrix::Sparse(s.select_columns(indices)),
        }
    }

    pub fn min_value(&self) -> f64 {
        match self {
            DataMatrix::Dense(m) => m.iter().copied().fold(f64::INFINITY, f64::min),
            DataMatrix::Sparse(s) => {
                let stored = s.values().iter().copied().fold(f64::INFINITY, f64::min);
                if s.nnz() < s.nrows() * s.ncols() {
                    stored.min(0.0)
                } else {
                    stored
                }
            }
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.min_value() >= 0.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            DataMatrix::Dense(m) => m.norm(),
            DataMatrix::Sparse(s) => s.values().iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    pub fn column_norms(&self) -> Vec<f64> {
        match self {
            DataMatrix::Dense(m) => m.column_iter().map(|c| c.norm()).collect(),
            DataMatrix::Sparse(s) => (0..s.ncols())
                .map(|j| s.column_iter(j).map(|(_, v)| v * v).sum::<f64>().sqrt())
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> DataMatrix {
        match self {
            DataMatrix::Dense(m) => DataMatrix::Dense(m * c),
            DataMatrix::Sparse(s) => DataMatrix::Sparse(s.scaled(c)),
        }
    }

    /// `self * x`
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DataMatrix::Dense(m) => m * x,
            DataMatrix::Sparse(s) => s.mul_vec(x),
        }
    }

    /// `self^T * y`
    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            DataMatrix::Dense(m) => m.tr_mul(y),
            DataMatrix::Sparse(s) => s.tr_mul_vec(y),
        }
    }

    /// `a^T * self` for a dense `a` with `d` rows.
    pub fn left_tr_mul(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            DataMatrix::Dense(m) => a.tr_mul(m),
            DataMatrix::Sparse(s) => {
                let mut out = DMatrix::zeros(a.ncols(), s.ncols());
                for j in 0..s.ncols() {
                    for (i, v) in s.column_iter(j) {
                        for k in 0..a.ncols() {
                            out[(k, j)] += a[(i, k)] * v;
                        }
                    }
                }
                out
            }
        }
    }
}

impl From<SparseMatrix> for DataMatrix {
    fn from(s: SparseMatrix) -> Self {
        DataMatrix::Sparse(s)
    }
}
