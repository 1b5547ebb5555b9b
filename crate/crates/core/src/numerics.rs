//! Dense linear algebra sized for desk-scale problems (n up to a few
//! hundred): LU solves with partial pivoting, a cyclic Jacobi symmetric
//! eigendecomposition, positive-semidefinite square roots, and minimum-norm
//! least squares. Storage is plain row-major `f64`.

use thiserror::Error;

/// Relative pivot threshold below which LU elimination declares a matrix
/// singular.
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-12;
/// Largest tolerated asymmetry `max |S_ij - S_ji|` for eigendecomposition.
pub const SYMMETRY_ATOL: f64 = 1e-9;
/// Eigenvalues above this are clamped to zero when taking a PSD root.
pub const PSD_CLAMP_ATOL: f64 = -1e-9;
/// Eigenvalues below this fail the PSD root outright.
pub const PSD_FAIL_ATOL: f64 = -1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("matrix is singular (pivot {pivot:.3e} below threshold {threshold:.3e})")]
    SingularMatrix { pivot: f64, threshold: f64 },
    #[error("matrix is not symmetric (max |S_ij - S_ji| = {defect:.3e})")]
    NotSymmetric { defect: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPsd { eigenvalue: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Diagonal matrix with the given entries.
    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Matrix::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add shape mismatch");
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) + other.get(i, j))
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "sub shape mismatch");
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) - other.get(i, j))
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn trace(&self) -> f64 {
        assert!(self.is_square(), "trace of a non-square matrix");
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute difference `|S_ij - S_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        assert!(self.is_square(), "symmetry defect of a non-square matrix");
        let mut d: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                d = d.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        d
    }

    /// Replaces the matrix with `(S + S^T) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        assert!(self.is_square(), "symmetrizing a non-square matrix");
        Matrix::from_fn(self.rows, self.cols, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)))
    }

    fn first_non_finite(&self) -> Option<(usize, usize)> {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.get(i, j).is_finite() {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot length mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn check_finite_matrix(m: &Matrix) -> Result<(), NumericsError> {
    match m.first_non_finite() {
        Some((row, col)) => Err(NumericsError::NonFinite { row, col }),
        None => Ok(()),
    }
}

fn check_finite_vec(v: &[f64]) -> Result<(), NumericsError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(NumericsError::NonFinite { row: i, col: 0 }),
        None => Ok(()),
    }
}

/// LU factorization with partial pivoting, stored in-place.
struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

fn lu_factor(a: &Matrix) -> Result<Lu, NumericsError> {
    assert!(a.is_square(), "LU of a non-square matrix");
    let n = a.rows();
    let threshold = SINGULAR_PIVOT_RTOL * a.max_abs();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        for i in (k + 1)..n {
            if lu.get(i, k).abs() > lu.get(p, k).abs() {
                p = i;
            }
        }
        let pivot = lu.get(p, k).abs();
        if pivot <= threshold {
            return Err(NumericsError::SingularMatrix { pivot, threshold });
        }
        if p != k {
            for j in 0..n {
                let t = lu.get(k, j);
                lu.set(k, j, lu.get(p, j));
                lu.set(p, j, t);
            }
            perm.swap(k, p);
        }
        let inv_pivot = 1.0 / lu.get(k, k);
        for i in (k + 1)..n {
            let factor = lu.get(i, k) * inv_pivot;
            lu.set(i, k, factor);
            if factor == 0.0 {
                continue;
            }
            for j in (k + 1)..n {
                lu.add_to(i, j, -factor * lu.get(k, j));
            }
        }
    }
    Ok(Lu { lu, perm })
}

fn lu_solve(f: &Lu, b: &[f64]) -> Vec<f64> {
    let n = f.perm.len();
    let mut x: Vec<f64> = f.perm.iter().map(|&p| b[p]).collect();
    for i in 1..n {
        let mut s = x[i];
        for j in 0..i {
            s -= f.lu.get(i, j) * x[j];
        }
        x[i] = s;
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= f.lu.get(i, j) * x[j];
        }
        x[i] = s / f.lu.get(i, i);
    }
    x
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if !a.is_square() || a.rows() != b.len() {
        return Err(NumericsError::DimensionMismatch(format!(
            "solve needs square A and matching b, got {}x{} and {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    check_finite_matrix(a)?;
    check_finite_vec(b)?;
    let f = lu_factor(a)?;
    Ok(lu_solve(&f, b))
}

/// Inverse via one LU factorization and `n` unit solves.
pub fn invert(a: &Matrix) -> Result<Matrix, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::DimensionMismatch(format!(
            "invert needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    check_finite_matrix(a)?;
    let n = a.rows();
    let f = lu_factor(a)?;
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = lu_solve(&f, &e);
        e[j] = 0.0;
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
    }
    Ok(inv)
}

/// 1-norm condition estimate `||A||_1 * ||A^-1||_1`, or `None` when the
/// matrix does not factor.
pub fn condition_estimate(a: &Matrix) -> Option<f64> {
    let inv = invert(a).ok()?;
    Some(one_norm(a) * one_norm(&inv))
}

fn one_norm(a: &Matrix) -> f64 {
    (0..a.cols())
        .map(|j| (0..a.rows()).map(|i| a.get(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, matching `values`.
    pub vectors: Matrix,
}

/// Full eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eigen(s: &Matrix) -> Result<SymEigen, NumericsError> {
    if !s.is_square() {
        return Err(NumericsError::DimensionMismatch(format!(
            "sym_eigen needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    check_finite_matrix(s)?;
    let defect = s.symmetry_defect();
    if defect > SYMMETRY_ATOL {
        return Err(NumericsError::NotSymmetric { defect });
    }
    let n = s.rows();
    let mut a = s.symmetrized();
    let mut v = Matrix::identity(n);
    let stop = 1e-14 * (1.0 + a.frobenius_norm());
    for _sweep in 0..100 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q) * a.get(p, q);
            }
        }
        if (2.0 * off).sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - sn * akq);
                    a.set(k, q, sn * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - sn * aqk);
                    a.set(q, k, sn * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - sn * vkq);
                    v.set(k, q, sn * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).partial_cmp(&a.get(i, i)).expect("finite eigenvalues"));
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v.get(i, order[j]));
    Ok(SymEigen { values, vectors })
}

/// Symmetric PSD square root `R` with `R R = S`, clamping tiny negative
/// eigenvalues to zero.
pub fn psd_sqrt(s: &Matrix) -> Result<Matrix, NumericsError> {
    let eig = sym_eigen(s)?;
    let scale = eig.values.first().map_or(0.0, |v| v.abs()).max(1.0);
    if let Some(&min) = eig.values.last() {
        if min < PSD_FAIL_ATOL * scale {
            return Err(NumericsError::NotPsd { eigenvalue: min });
        }
    }
    let roots: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let n = s.rows();
    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += eig.vectors.get(i, k) * roots[k] * eig.vectors.get(j, k);
            }
            r.set(i, j, acc);
            r.set(j, i, acc);
        }
    }
    Ok(r)
}

/// Minimum-norm least-squares solution of `A x = b`.
///
/// Works for any shape and rank, including the zero matrix, via the
/// eigendecomposition of `A^T A` with a relative rank cutoff.
pub fn least_squares(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if a.rows() != b.len() {
        return Err(NumericsError::DimensionMismatch(format!(
            "least_squares needs rows(A) = len(b), got {} and {}",
            a.rows(),
            b.len()
        )));
    }
    check_finite_matrix(a)?;
    check_finite_vec(b)?;
    let at = a.transpose();
    let gram = at.matmul(a);
    let eig = sym_eigen(&gram)?;
    let atb = at.matvec(b);
    let d = a.cols();
    let lead = eig.values.first().copied().unwrap_or(0.0);
    if lead <= 0.0 {
        return Ok(vec![0.0; d]);
    }
    let cutoff = lead * 1e-12;
    // x = V D^+ V^T (A^T b)
    let mut coeffs = vec![0.0; d];
    for k in 0..d {
        if eig.values[k] <= cutoff {
            continue;
        }
        let mut proj = 0.0;
        for i in 0..d {
            proj += eig.vectors.get(i, k) * atb[i];
        }
        coeffs[k] = proj / eig.values[k];
    }
    let mut x = vec![0.0; d];
    for i in 0..d {
        let mut acc = 0.0;
        for k in 0..d {
            acc += eig.vectors.get(i, k) * coeffs[k];
        }
        x[i] = acc;
    }
    Ok(x)
}
