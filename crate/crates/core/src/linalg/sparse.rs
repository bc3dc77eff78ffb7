use crate::error::{Error, Result};
use crate::linalg::dense::axpy;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Compressed sparse row matrix with explicit values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from per-row `(col, value)` lists; columns must be sorted.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows.iter() {
            for w in row.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(Error::shape("CsrMatrix::from_rows", "columns not strictly sorted"));
                }
            }
            for &(c, v) in row {
                if c >= n_cols {
                    return Err(Error::Range {
                        what: "sparse column",
                        index: c,
                        len: n_cols,
                    });
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterator over `(col, value)` in row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// `self · x`.
    pub fn matmul_dense(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if self.n_cols != x.rows() {
            return Err(Error::shape(
                "spmm",
                format!("{}x{} sparse x {:?}", self.n_rows, self.n_cols, x.shape()),
            ));
        }
        let mut out = Matrix::zeros(self.n_rows, x.cols());
        for i in 0..self.n_rows {
            let out_row = out.row_mut(i);
            for (j, v) in self.row(i) {
                axpy(v, x.row(j), out_row);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · x`.
    pub fn t_matmul_dense(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if self.n_rows != x.rows() {
            return Err(Error::shape(
                "spmm_t",
                format!("{}x{} sparseᵀ x {:?}", self.n_rows, self.n_cols, x.shape()),
            ));
        }
        let mut out = Matrix::zeros(self.n_cols, x.cols());
        for i in 0..self.n_rows {
            let x_row = x.row(i);
            for (j, v) in self.row(i) {
                axpy(v, x_row, out.row_mut(j));
            }
        }
        Ok(out)
    }

    /// Row sums, i.e. `self · 1`.
    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n_rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spmm_matches_dense() {
        let s = CsrMatrix::from_rows(
            3,
            vec![vec![(0, 1.0), (2, 2.0)], vec![], vec![(1, -1.0)]],
        )
        .unwrap();
        let x = Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let dense = s.to_dense();
        assert_eq!(s.matmul_dense(&x).unwrap(), dense.matmul(&x).unwrap());
        assert_eq!(
            s.t_matmul_dense(&x).unwrap(),
            dense.transpose().matmul(&x).unwrap()
        );
        assert_eq!(s.get(0, 2), 2.0);
        assert_eq!(s.get(1, 1), 0.0);
    }

    #[test]
    fn rejects_unsorted_columns() {
        assert!(CsrMatrix::from_rows(3, vec![vec![(2, 1.0f64), (0, 1.0)]]).is_err());
        assert!(CsrMatrix::from_rows(1, vec![vec![(3, 1.0f64)]]).is_err());
    }
}
