//! Dense matrix kernels shared by the rest of the crate: products, symmetric
//! positive-definite solves, and a one-sided Jacobi SVD.
//!
//! Everything is 64-bit and deterministic: identical inputs produce
//! bitwise-identical outputs on a fixed platform.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from the dense kernels.
#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive definite (pivot {pivot:.3e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("SVD did not converge within {0} sweeps")]
    SvdNonConvergence(usize),
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            rows: usize,
            cols: usize,
            data: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        if raw.rows * raw.cols != raw.data.len() {
            return Err(serde::de::Error::custom(format!(
                "matrix storage length {} does not match {}x{}",
                raw.data.len(),
                raw.rows,
                raw.cols
            )));
        }
        Ok(Matrix { rows: raw.rows, cols: raw.cols, data: raw.data })
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices. Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "storage length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index of the first non-finite entry, if any.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / self.cols, p % self.cols))
    }

    /// Multiplies `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let lhs_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let rhs_row = rhs.row(k);
                for (j, &b) in rhs_row.iter().enumerate() {
                    out_row[j] += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Multiplies `self * v` for a vector `v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if self.cols != v.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} * {}-vector",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest value; earliest wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Cholesky factor of a symmetric positive-definite matrix.
///
/// Pivots at or below `PIVOT_REL_TOL` times the largest diagonal entry are
/// treated as a positive-definiteness failure rather than letting near-zero
/// pivots poison the solve.
pub struct Cholesky {
    factor: Matrix,
}

const PIVOT_REL_TOL: f64 = 1e-13;

impl Cholesky {
    pub fn factor(m: &Matrix) -> Result<Self, LinalgError> {
        let n = m.rows;
        if m.cols != n {
            return Err(LinalgError::DimensionMismatch(format!("{}x{} not square", m.rows, m.cols)));
        }
        let max_diag = (0..n).fold(0.0f64, |acc, i| acc.max(m[(i, i)].abs())).max(1e-300);
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > PIVOT_REL_TOL * max_diag) {
                return Err(LinalgError::NotPositiveDefinite { column: j, pivot: d });
            }
            let diag = d.sqrt();
            l[(j, j)] = diag;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / diag;
            }
        }
        Ok(Cholesky { factor: l })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.factor.rows;
        debug_assert_eq!(b.len(), n);
        let l = &self.factor;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= l[(i, k)] * y[k];
            }
            y[i] /= l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= l[(k, i)] * y[k];
            }
            y[i] /= l[(i, i)];
        }
        y
    }
}

/// Solves `M X = B` for symmetric positive-definite `M` via Cholesky.
pub fn spd_solve(m: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if m.rows != b.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} vs rhs {}x{}",
            m.rows, m.cols, b.rows, b.cols
        )));
    }
    let chol = Cholesky::factor(m)?;
    let mut x = Matrix::zeros(b.rows, b.cols);
    for j in 0..b.cols {
        let col = chol.solve_vec(&b.col_vec(j));
        for i in 0..b.rows {
            x[(i, j)] = col[i];
        }
    }
    Ok(x)
}

/// Thin singular value decomposition `A = U diag(sigma) V^T`.
pub struct Svd {
    /// m x k with orthonormal columns, k = min(m, n).
    pub u: Matrix,
    /// Non-increasing, non-negative.
    pub sigma: Vec<f64>,
    /// n x k with orthonormal columns.
    pub v: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 64;
const JACOBI_TOL: f64 = 1e-14;

/// One-sided Jacobi SVD. Accurate at the scale this crate handles; cost is
/// O(m n^2) per sweep.
pub fn svd(a: &Matrix) -> Result<Svd, LinalgError> {
    if let Some((i, j)) = a.find_non_finite() {
        return Err(LinalgError::NonFinite(i, j));
    }
    if a.rows < a.cols {
        let t = svd(&a.transpose())?;
        return Ok(Svd { u: t.v, sigma: t.sigma, v: t.u });
    }
    let m = a.rows;
    let n = a.cols;
    if n == 0 {
        return Ok(Svd { u: Matrix::zeros(m, 0), sigma: Vec::new(), v: Matrix::zeros(0, 0) });
    }
    // Work on columns of B, accumulating the right rotations in V.
    let mut b = a.clone();
    let mut v = Matrix::identity(n);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    b[(i, p)] = c * bp - s * bq;
                    b[(i, q)] = s * bp + c * bq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::SvdNonConvergence(JACOBI_MAX_SWEEPS));
    }

    let mut sigma: Vec<f64> = (0..n).map(|j| dot(&b.col_vec(j), &b.col_vec(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let sigma_max = sigma[order[0]];
    let mut u = Matrix::zeros(m, n);
    let mut v_sorted = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            v_sorted[(i, dst)] = v[(i, src)];
        }
        let s = sigma[src];
        if s > sigma_max * 1e-15 && s > 0.0 {
            for i in 0..m {
                u[(i, dst)] = b[(i, src)] / s;
            }
        }
    }
    sigma.sort_by(|a, b| b.total_cmp(a));
    // Negligible columns cannot be normalized; complete U to an orthonormal
    // basis so downstream orthonormality checks hold regardless of rank.
    complete_orthonormal(&mut u, &sigma, sigma_max);
    Ok(Svd { u, sigma, v: v_sorted })
}

fn complete_orthonormal(u: &mut Matrix, sigma: &[f64], sigma_max: f64) {
    let m = u.rows;
    let n = u.cols;
    for j in 0..n {
        if sigma[j] > sigma_max * 1e-15 && sigma[j] > 0.0 {
            continue;
        }
        // Pick the unit vector least represented by the basis built so far,
        // then orthogonalize it (two Gram-Schmidt passes).
        let mut best = (0usize, -1.0f64);
        for cand in 0..m {
            let mut residual = 1.0;
            for k in 0..n {
                if k == j {
                    continue;
                }
                let proj = u[(cand, k)];
                residual -= proj * proj;
            }
            if residual > best.1 {
                best = (cand, residual);
            }
        }
        let mut col = vec![0.0; m];
        col[best.0] = 1.0;
        for _ in 0..2 {
            for k in 0..n {
                if k == j {
                    continue;
                }
                let proj: f64 = (0..m).map(|i| col[i] * u[(i, k)]).sum();
                if proj != 0.0 {
                    for (i, c) in col.iter_mut().enumerate() {
                        *c -= proj * u[(i, k)];
                    }
                }
            }
        }
        let norm = dot(&col, &col).sqrt();
        for i in 0..m {
            u[(i, j)] = col[i] / norm;
        }
    }
}

/// Moore-Penrose pseudo-inverse via SVD, truncating singular values below
/// `rel_tol * sigma_max`.
pub fn pseudo_inverse(a: &Matrix, rel_tol: f64) -> Result<Matrix, LinalgError> {
    let decomp = svd(a)?;
    let sigma_max = decomp.sigma.first().copied().unwrap_or(0.0);
    let threshold = rel_tol * sigma_max;
    let k = decomp.sigma.len();
    let mut out = Matrix::zeros(a.cols(), a.rows());
    for r in 0..k {
        let s = decomp.sigma[r];
        if s <= threshold || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..a.cols() {
            let vi = decomp.v[(i, r)];
            if vi == 0.0 {
                continue;
            }
            for j in 0..a.rows() {
                out[(i, j)] += vi * inv * decomp.u[(j, r)];
            }
        }
    }
    Ok(out)
}
