//! Fixed (non-trainable) sparse row matrix for gather-scatter message
//! passing. Dense adjacency is reserved for test oracles.

use super::Matrix;

/// Row-wise sparse matrix: `rows[i]` lists `(col, coeff)` entries.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    n_cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_cols,
            rows: vec![Vec::new(); n_rows],
        }
    }

    pub fn push(&mut self, row: usize, col: usize, coeff: f64) {
        assert!(col < self.n_cols, "column out of range");
        self.rows[row].push((col, coeff));
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `self [r x c] * dense [c x d]`.
    pub fn mul_dense(&self, dense: &Matrix) -> Matrix {
        assert_eq!(self.n_cols, dense.rows(), "sparse-dense inner dims");
        let mut out = Matrix::zeros(self.rows.len(), dense.cols());
        for (i, entries) in self.rows.iter().enumerate() {
            for &(j, w) in entries {
                let src = dense.row(j);
                let dst = out.row_mut(i);
                for (o, &v) in dst.iter_mut().zip(src) {
                    *o += w * v;
                }
            }
        }
        out
    }

    /// `self^T [c x r] * dense [r x d]`; the backward pass of `mul_dense`.
    pub fn transpose_mul_dense(&self, dense: &Matrix) -> Matrix {
        assert_eq!(self.rows.len(), dense.rows(), "sparse^T-dense inner dims");
        let mut out = Matrix::zeros(self.n_cols, dense.cols());
        for (i, entries) in self.rows.iter().enumerate() {
            let src = dense.row(i);
            for &(j, w) in entries {
                let dst = out.row_mut(j);
                for (o, &v) in dst.iter_mut().zip(src) {
                    *o += w * v;
                }
            }
        }
        out
    }

    #[cfg(test)]
    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows.len(), self.n_cols);
        for (i, entries) in self.rows.iter().enumerate() {
            for &(j, w) in entries {
                m.set(i, j, m.get(i, j) + w);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_products_match_dense() {
        let mut s = SparseMatrix::new(3, 4);
        s.push(0, 1, 2.0);
        s.push(0, 3, -1.0);
        s.push(2, 0, 0.5);
        let x = Matrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64 + 1.0);
        let got = s.mul_dense(&x);
        let want = s.to_dense().matmul_nn(&x);
        assert_eq!(got.data(), want.data());

        let y = Matrix::from_fn(3, 2, |i, j| (i + j) as f64 - 1.0);
        let got_t = s.transpose_mul_dense(&y);
        let want_t = s.to_dense().matmul_tn(&y);
        assert_eq!(got_t.data(), want_t.data());
    }
}
