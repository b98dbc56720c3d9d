use crate::linalg::dense::{dot, DenseMatrix};
use crate::linalg::sparse::SparseMatrix;

/// A system matrix that is either dense or sparse.
///
/// Sparsity is only exploited in products and row access; anything that
/// needs a factorization densifies first.
#[derive(Clone, Debug, PartialEq)]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl From<DenseMatrix> for Matrix {
    fn from(m: DenseMatrix) -> Self {
        Matrix::Dense(m)
    }
}

impl From<SparseMatrix> for Matrix {
    fn from(m: SparseMatrix) -> Self {
        Matrix::Sparse(m)
    }
}

impl Matrix {
    pub fn rows(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.rows(),
            Matrix::Sparse(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.cols(),
            Matrix::Sparse(s) => s.cols(),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            Matrix::Dense(d) => d.as_slice().iter().filter(|v| **v != 0.0).count(),
            Matrix::Sparse(s) => s.nnz(),
        }
    }

    /// Cost of one product with this matrix in the closed-form flop model.
    pub fn product_flops(&self) -> u64 {
        match self {
            Matrix::Dense(d) => 2 * (d.rows() * d.cols()) as u64,
            Matrix::Sparse(s) => 2 * s.nnz() as u64,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Matrix::Dense(d) => d.matvec(x),
            Matrix::Sparse(s) => s.matvec(x),
        }
    }

    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Matrix::Dense(d) => d.matvec_t(y),
            Matrix::Sparse(s) => s.matvec_t(y),
        }
    }

    /// `A·M` for a dense right factor.
    pub fn matmul_dense(&self, m: &DenseMatrix) -> DenseMatrix {
        match self {
            Matrix::Dense(d) => d.matmul(m),
            Matrix::Sparse(s) => {
                let mut out = DenseMatrix::zeros(s.rows(), m.cols());
                for i in 0..s.rows() {
                    let (idx, vals) = s.row(i);
                    let row = out.row_mut(i);
                    for (&k, &v) in idx.iter().zip(vals) {
                        for (o, &mk) in row.iter_mut().zip(m.row(k)) {
                            *o += v * mk;
                        }
                    }
                }
                out
            }
        }
    }

    /// `Aᵀ·M` for a dense right factor with `rows(A)` rows.
    pub fn t_matmul_dense(&self, m: &DenseMatrix) -> DenseMatrix {
        match self {
            Matrix::Dense(d) => d.t_matmul(m),
            Matrix::Sparse(s) => {
                let mut out = DenseMatrix::zeros(s.cols(), m.cols());
                for i in 0..s.rows() {
                    let (idx, vals) = s.row(i);
                    for (&j, &v) in idx.iter().zip(vals) {
                        for (o, &mk) in out.row_mut(j).iter_mut().zip(m.row(i)) {
                            *o += v * mk;
                        }
                    }
                }
                out
            }
        }
    }

    /// `AᵀA`, accumulated row by row for sparse storage.
    pub fn gram(&self) -> DenseMatrix {
        match self {
            Matrix::Dense(d) => d.t_matmul(d).symmetrized(),
            Matrix::Sparse(s) => {
                let n = s.cols();
                let mut out = DenseMatrix::zeros(n, n);
                for i in 0..s.rows() {
                    let (idx, vals) = s.row(i);
                    for (&j, &vj) in idx.iter().zip(vals) {
                        let row = out.row_mut(j);
                        for (&k, &vk) in idx.iter().zip(vals) {
                            row[k] += vj * vk;
                        }
                    }
                }
                out
            }
        }
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        match self {
            Matrix::Dense(d) => dot(d.row(i), x),
            Matrix::Sparse(s) => {
                let (idx, vals) = s.row(i);
                idx.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            }
        }
    }

    /// `x += alpha · A_{i:}ᵀ`
    pub fn row_axpy(&self, i: usize, alpha: f64, x: &mut [f64]) {
        match self {
            Matrix::Dense(d) => {
                for (xj, &v) in x.iter_mut().zip(d.row(i)) {
                    *xj += alpha * v;
                }
            }
            Matrix::Sparse(s) => {
                let (idx, vals) = s.row(i);
                for (&j, &v) in idx.iter().zip(vals) {
                    x[j] += alpha * v;
                }
            }
        }
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        match self {
            Matrix::Dense(d) => d.cols(),
            Matrix::Sparse(s) => s.row(i).0.len(),
        }
    }

    pub fn row_dense(&self, i: usize) -> Vec<f64> {
        match self {
            Matrix::Dense(d) => d.row(i).to_vec(),
            Matrix::Sparse(s) => {
                let mut out = vec![0.0; s.cols()];
                let (idx, vals) = s.row(i);
                for (&j, &v) in idx.iter().zip(vals) {
                    out[j] = v;
                }
                out
            }
        }
    }

    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.rows())
            .map(|i| match self {
                Matrix::Dense(d) => dot(d.row(i), d.row(i)),
                Matrix::Sparse(s) => s.row(i).1.iter().map(|v| v * v).sum(),
            })
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Matrix::Dense(d) => d[(i, j)],
            Matrix::Sparse(s) => {
                let (idx, vals) = s.row(i);
                idx.binary_search(&j).map_or(0.0, |k| vals[k])
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows().min(self.cols())).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        match self {
            Matrix::Dense(d) => Matrix::Dense(d.transpose()),
            Matrix::Sparse(s) => Matrix::Sparse(s.transpose()),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Matrix::Dense(d) => d.clone(),
            Matrix::Sparse(s) => s.to_dense(),
        }
    }

    pub fn select_rows_dense(&self, idx: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(idx.len(), self.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(&self.row_dense(i));
        }
        out
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.row_norms_sq().iter().sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        match self {
            Matrix::Dense(d) => d.is_square() && d.asymmetry() <= tol,
            Matrix::Sparse(s) => {
                if s.rows() != s.cols() {
                    return false;
                }
                let t = s.transpose();
                let mut diff = 0.0;
                for i in 0..s.rows() {
                    let (ia, va) = s.row(i);
                    let (ib, vb) = t.row(i);
                    let (mut p, mut q) = (0, 0);
                    while p < ia.len() || q < ib.len() {
                        let ja = ia.get(p).copied().unwrap_or(usize::MAX);
                        let jb = ib.get(q).copied().unwrap_or(usize::MAX);
                        let d = if ja == jb {
                            p += 1;
                            q += 1;
                            va[p - 1] - vb[q - 1]
                        } else if ja < jb {
                            p += 1;
                            va[p - 1]
                        } else {
                            q += 1;
                            vb[q - 1]
                        };
                        diff += d * d;
                    }
                }
                let scale = self.frobenius_norm_sq().sqrt();
                scale == 0.0 || diff.sqrt() / scale <= tol
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_sparse_products_agree() {
        let d = DenseMatrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]]);
        let s = Matrix::Sparse(SparseMatrix::from_dense(&d));
        let dm = Matrix::Dense(d.clone());
        let x = [1.0, -1.0, 0.5];
        assert_eq!(s.matvec(&x), dm.matvec(&x));
        assert_eq!(s.matvec_t(&[2.0, 1.0]), dm.matvec_t(&[2.0, 1.0]));
        let g = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        assert_eq!(s.matmul_dense(&g), dm.matmul_dense(&g));
        let h = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.0]]);
        assert_eq!(s.t_matmul_dense(&h), dm.t_matmul_dense(&h));
        assert_eq!(s.row_norms_sq(), vec![5.0, 9.0]);
    }

    #[test]
    fn sparse_symmetry_check() {
        let sym = SparseMatrix::from_triplets(2, 2, &[(0, 1, 5.0), (1, 0, 5.0), (0, 0, 1.0)]).unwrap();
        assert!(Matrix::Sparse(sym).is_symmetric(1e-12));
        let asym = SparseMatrix::from_triplets(2, 2, &[(0, 1, 5.0), (0, 0, 1.0)]).unwrap();
        assert!(!Matrix::Sparse(asym).is_symmetric(1e-12));
    }
}
