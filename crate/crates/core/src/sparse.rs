//! Compressed sparse row storage for propagation matrices.

use ndarray::{Array2, ArrayView2};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_dense(dense: ArrayView2<f64>) -> Self {
        let (rows, cols) = dense.dim();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in dense.outer_iter() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for i in 0..self.rows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out[[i, self.indices[p]]] = self.data[p];
            }
        }
        out
    }

    /// `self · b`
    pub fn dot(&self, b: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.cols, b.nrows(), "sparse dot: inner dimension mismatch");
        let mut out = Array2::zeros((self.rows, b.ncols()));
        for i in 0..self.rows {
            let mut dst = out.row_mut(i);
            for p in self.indptr[i]..self.indptr[i + 1] {
                dst.scaled_add(self.data[p], &b.row(self.indices[p]));
            }
        }
        out
    }

    /// `selfᵀ · b`
    pub fn transpose_dot(&self, b: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.rows, b.nrows(), "sparse transpose dot: inner dimension mismatch");
        let mut out = Array2::zeros((self.cols, b.ncols()));
        for i in 0..self.rows {
            let src = b.row(i);
            for p in self.indptr[i]..self.indptr[i + 1] {
                out.row_mut(self.indices[p]).scaled_add(self.data[p], &src);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matches_dense_products() {
        let a = array![[0.0, 2.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.5, 3.0]];
        let b = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let csr = CsrMatrix::from_dense(a.view());
        assert_eq!(csr.nnz(), 4);
        assert_eq!(csr.dot(b.view()), a.dot(&b));
        assert_eq!(csr.transpose_dot(b.view()), a.t().dot(&b));
        assert_eq!(csr.to_dense(), a);
    }
}
