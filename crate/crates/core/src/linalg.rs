//! Small dense linear algebra: a row-major [`Matrix`], Cholesky solves for
//! symmetric positive-definite systems, and intercept-augmented ordinary or
//! ridge least squares.
//!
//! Everything here is sized for local explanation problems, where the design
//! has a few dozen rows and at most a few dozen columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivots below this fraction of the largest diagonal entry are treated as zero.
const PIVOT_RELATIVE_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::BadShape(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::BadParameter(format!("non-finite matrix entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::BadShape(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact(0) panics, and a zero-column matrix has no row data anyway.
        let width = self.cols.max(1);
        self.data
            .chunks_exact(width)
            .take(if self.cols == 0 { 0 } else { self.rows })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
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

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::BadShape(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self.iter_rows().map(|row| dot(row, v)).collect())
    }

    /// `self^T v`.
    pub fn tr_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::BadShape(format!(
                "cannot multiply transpose of {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (row, &s) in self.iter_rows().zip(v) {
            axpy(s, row, &mut out);
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::BadShape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a != 0.0 {
                    axpy(a, other.row(k), out.row_mut(i));
                }
            }
        }
        Ok(out)
    }

    /// `self^T self`.
    pub fn gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.cols, self.cols);
        for row in self.iter_rows() {
            for a in 0..self.cols {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in a..self.cols {
                    g.data[a * self.cols + b] += ra * row[b];
                }
            }
        }
        for a in 0..self.cols {
            for b in 0..a {
                g.data[a * self.cols + b] = g.data[b * self.cols + a];
            }
        }
        g
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                (0..i).all(|j| {
                    let (a, b) = (self[(i, j)], self[(j, i)]);
                    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
                })
            })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four independent partial sums so the loop vectorizes
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    factor: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        Self::with_jitter(a, 0.0)
    }

    /// Factors `a + jitter * I`.
    pub fn with_jitter(a: &Matrix, jitter: f64) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::BadShape(format!(
                "Cholesky needs a square matrix, got {}x{}",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max) + jitter;
        let tol = PIVOT_RELATIVE_TOL * scale.max(f64::MIN_POSITIVE);
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut pivot = a[(j, j)] + jitter;
            pivot -= dot(&l.row(j)[..j], &l.row(j)[..j]);
            if !(pivot > tol) {
                return Err(Error::NotPositiveDefinite { index: j, pivot });
            }
            let d = pivot.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { factor: l })
    }

    pub fn dim(&self) -> usize {
        self.factor.rows
    }

    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::BadShape(format!(
                "right-hand side has length {}, expected {n}",
                b.len()
            )));
        }
        let l = &self.factor;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = y[i] - dot(&l.row(i)[..i], &y[..i]);
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        Ok(y)
    }
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    solve_spd_jittered(a, b, 0.0)
}

/// Like [`solve_spd`], but retries once with `jitter` added to the diagonal
/// when the plain factorization fails.
pub fn solve_spd_jittered(a: &Matrix, b: &[f64], jitter: f64) -> Result<Vec<f64>> {
    if !a.is_symmetric(1e-12) {
        return Err(Error::BadParameter("solve_spd needs a symmetric matrix".into()));
    }
    match Cholesky::new(a) {
        Ok(chol) => chol.solve(b),
        Err(Error::NotPositiveDefinite { .. }) if jitter > 0.0 => {
            Cholesky::with_jitter(a, jitter)?.solve(b)
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsSolution {
    /// Intercept first, then one weight per feature.
    pub coefficients: Vec<f64>,
    /// Mean squared residual, without the ridge penalty.
    pub residual_mean: f64,
}

impl OlsSolution {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[1..]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept() + dot(self.slopes(), x)
    }
}

/// A factored intercept-augmented least-squares problem.
///
/// The design is `Z = [1, X]`; the normal matrix is `Z^T Z + ridge * D` with
/// `D = diag(0, 1, .., 1)` so the intercept is never penalized. One
/// factorization serves any number of target vectors.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    design: Matrix,
    normal: Cholesky,
}

impl LeastSquares {
    pub fn new(points: &Matrix, ridge: f64) -> Result<Self> {
        let columns: Vec<usize> = (0..points.cols()).collect();
        Self::with_columns(points, &columns, ridge)
    }

    /// Uses only the listed feature columns of `points`.
    pub fn with_columns(points: &Matrix, columns: &[usize], ridge: f64) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::EmptyDataset {
                needed: 1,
                found: 0,
            });
        }
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(Error::BadParameter(format!("ridge must be >= 0, got {ridge}")));
        }
        if let Some(&bad) = columns.iter().find(|&&c| c >= points.cols()) {
            return Err(Error::BadIndex {
                index: bad,
                dim: points.cols(),
            });
        }
        let p = columns.len() + 1;
        let mut design = Matrix::zeros(points.rows(), p);
        for (i, row) in points.iter_rows().enumerate() {
            let out = design.row_mut(i);
            out[0] = 1.0;
            for (k, &c) in columns.iter().enumerate() {
                out[k + 1] = row[c];
            }
        }
        let mut normal = design.gram();
        for k in 1..p {
            normal[(k, k)] += ridge;
        }
        let normal = Cholesky::new(&normal)?;
        Ok(Self { design, normal })
    }

    pub fn design(&self) -> &Matrix {
        &self.design
    }

    pub fn samples(&self) -> usize {
        self.design.rows()
    }

    pub fn coefficients(&self, targets: &[f64]) -> Result<Vec<f64>> {
        let rhs = self.design.tr_matvec(targets)?;
        self.normal.solve(&rhs)
    }

    /// Returns the fit and the residual vector `targets - Z beta`.
    pub fn fit_with_residuals(&self, targets: &[f64]) -> Result<(OlsSolution, Vec<f64>)> {
        let coefficients = self.coefficients(targets)?;
        let fitted = self.design.matvec(&coefficients)?;
        let residuals: Vec<f64> = targets.iter().zip(&fitted).map(|(t, f)| t - f).collect();
        let residual_mean = residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64;
        Ok((
            OlsSolution {
                coefficients,
                residual_mean,
            },
            residuals,
        ))
    }

    pub fn fit(&self, targets: &[f64]) -> Result<OlsSolution> {
        self.fit_with_residuals(targets).map(|(s, _)| s)
    }

    /// Applies the (ridge) hat matrix `Z (Z^T Z + ridge D)^{-1} Z^T` to `v`.
    pub fn apply_hat(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.design.matvec(&self.coefficients(v)?)
    }
}

/// Fits `targets ~ intercept + points * slopes` by (ridge) least squares.
pub fn ols_fit(points: &Matrix, targets: &[f64], ridge: f64) -> Result<OlsSolution> {
    if targets.len() != points.rows() {
        return Err(Error::BadShape(format!(
            "{} targets for {} points",
            targets.len(),
            points.rows()
        )));
    }
    LeastSquares::new(points, ridge)?.fit(targets)
}
