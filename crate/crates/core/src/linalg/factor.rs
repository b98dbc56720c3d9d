use crate::error::{Result, SketchError};
use crate::linalg::dense::{dot, DenseMatrix};

/// Lower-triangular Cholesky factor, `B = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    lower: DenseMatrix,
}

impl Cholesky {
    /// Fails when any pivot falls to `n·ε·max(diag)` or below.
    pub fn factor(b: &DenseMatrix) -> Result<Self> {
        b.ensure_symmetric(crate::linalg::eigen::SYMMETRY_TOL)?;
        let n = b.rows();
        let max_diag = b.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let floor = (n.max(1) as f64) * f64::EPSILON * max_diag;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = b[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > floor) {
                return Err(SketchError::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = b[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    /// `L⁻¹ v`
    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = v.to_vec();
        for i in 0..n {
            let row = self.lower.row(i);
            let s = dot(&row[..i], &y[..i]);
            y[i] = (y[i] - s) / row[i];
        }
        y
    }

    /// `L⁻ᵀ v`
    pub fn backward(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = v.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.lower[(k, i)] * x[k];
            }
            x[i] = s / self.lower[(i, i)];
        }
        x
    }

    /// `B⁻¹ v`
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(v))
    }

    /// `B⁻¹ M`, column by column.
    pub fn solve_matrix(&self, m: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(m.rows(), m.cols());
        for j in 0..m.cols() {
            out.set_column(j, &self.solve(&m.column(j)));
        }
        out
    }

    /// `L⁻¹ M L⁻ᵀ`, symmetric and similar to `B⁻¹ M`.
    pub fn congruence(&self, m: &DenseMatrix) -> DenseMatrix {
        let n = self.dim();
        let mut left = DenseMatrix::zeros(n, m.cols());
        for j in 0..m.cols() {
            left.set_column(j, &self.forward(&m.column(j)));
        }
        // L⁻¹ (L⁻¹M)ᵀ: the columns of (L⁻¹M)ᵀ are the rows of L⁻¹M
        let mut out = DenseMatrix::zeros(n, n);
        for j in 0..n {
            out.set_column(j, &self.forward(left.row(j)));
        }
        out.symmetrized()
    }
}

/// Solves a square system by LU with partial pivoting.
pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if !a.is_square() {
        return Err(SketchError::dims("lu_solve square matrix", n, a.cols()));
    }
    if b.len() != n {
        return Err(SketchError::dims("lu_solve right-hand side", n, b.len()));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.max_abs();
    let floor = (n.max(1) as f64) * f64::EPSILON * scale;
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if pivot <= floor {
            return Err(SketchError::NotPositiveDefinite { index: k, pivot });
        }
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            x.swap(k, p);
        }
        for i in (k + 1)..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                m[(i, j)] -= f * m[(k, j)];
            }
            x[i] -= f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}

/// Householder QR with column pivoting, `A P = Q R`.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    /// Orthonormal basis of range(A), `m × rank`.
    pub basis: DenseMatrix,
    pub rank: usize,
    pub permutation: Vec<usize>,
    pub r_diagonal: Vec<f64>,
}

impl PivotedQr {
    /// Columns with `|R_kk| ≤ max(m,n)·ε·|R_00|` are treated as dependent.
    pub fn factor(a: &DenseMatrix) -> Self {
        let (m, n) = (a.rows(), a.cols());
        let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(steps);
        let mut r_diag = Vec::with_capacity(steps);

        for k in 0..steps {
            let (best, _) = (k..n)
                .map(|j| (j, cols[j][k..].iter().map(|v| v * v).sum::<f64>()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            cols.swap(k, best);
            perm.swap(k, best);

            let x = &cols[k][k..];
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                r_diag.push(0.0);
                reflectors.push((vec![0.0; m - k], 0.0));
                continue;
            }
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vtv: f64 = v.iter().map(|t| t * t).sum();
            let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
            for col in cols.iter_mut().skip(k) {
                let tail = &mut col[k..];
                let proj = beta * dot(&v, tail);
                for (t, vi) in tail.iter_mut().zip(&v) {
                    *t -= proj * vi;
                }
            }
            r_diag.push(alpha);
            reflectors.push((v, beta));
        }

        let lead = r_diag.first().map_or(0.0, |r: &f64| r.abs());
        let tol = (m.max(n) as f64) * f64::EPSILON * lead;
        let rank = if lead == 0.0 {
            0
        } else {
            r_diag.iter().take_while(|r| r.abs() > tol).count()
        };

        let mut basis = DenseMatrix::zeros(m, rank);
        for j in 0..rank {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            for (k, (v, beta)) in reflectors.iter().enumerate().rev() {
                let tail = &mut e[k..];
                let proj = beta * dot(v, tail);
                for (t, vi) in tail.iter_mut().zip(v) {
                    *t -= proj * vi;
                }
            }
            basis.set_column(j, &e);
        }

        PivotedQr {
            basis,
            rank,
            permutation: perm,
            r_diagonal: r_diag,
        }
    }
}

/// Numerical rank via pivoted QR.
pub fn rank(a: &DenseMatrix) -> usize {
    if a.rows() == 0 || a.cols() == 0 {
        return 0;
    }
    PivotedQr::factor(a).rank
}
