#![allow(dead_code)]

use expo_core::linalg::Matrix;
use expo_core::model::{Activation, MlpModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Dense row-major copy as nested vectors.
pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

/// Gaussian elimination with partial pivoting on a general square system.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        for row in col + 1..n {
            let f = aug[row][col] / aug[col][col];
            for k in col..=n {
                aug[row][k] -= f * aug[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| aug[i][k] * x[k]).sum();
        x[i] = (aug[i][n] - s) / aug[i][i];
    }
    x
}

/// Gauss-Jordan inverse.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(gauss_solve(a, &e));
    }
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// `[1, X]`.
pub fn design(points: &Matrix) -> Vec<Vec<f64>> {
    points
        .iter_rows()
        .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
        .collect()
}

/// Solves `(Z^T Z + ridge D) beta = Z^T y` with `D = diag(0, 1, ..)` by brute force.
pub fn normal_equations(points: &Matrix, y: &[f64], ridge: f64) -> Vec<f64> {
    let z = design(points);
    let p = z[0].len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for (row, &yi) in z.iter().zip(y) {
        for i in 0..p {
            b[i] += row[i] * yi;
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    for (i, r) in a.iter_mut().enumerate().skip(1) {
        r[i] += ridge;
    }
    gauss_solve(&a, &b)
}

/// `(1/m) y^T (I - H) y` with `H = Z (Z^T Z)^-1 Z^T` formed explicitly.
pub fn hat_residual(points: &Matrix, y: &[f64]) -> f64 {
    let z = design(points);
    let m = z.len();
    let p = z[0].len();
    let mut ztz = vec![vec![0.0; p]; p];
    for row in &z {
        for i in 0..p {
            for j in 0..p {
                ztz[i][j] += row[i] * row[j];
            }
        }
    }
    let inv = invert(&ztz);
    let mut total = 0.0;
    for a in 0..m {
        for b in 0..m {
            let mut h = 0.0;
            for i in 0..p {
                for j in 0..p {
                    h += z[a][i] * inv[i][j] * z[b][j];
                }
            }
            let ih = if a == b { 1.0 - h } else { -h };
            total += y[a] * ih * y[b];
        }
    }
    total / m as f64
}

pub fn random_tanh_model(rng: &mut ChaCha8Rng, d: usize, outputs: usize) -> MlpModel {
    let mut sizes = vec![d];
    for _ in 0..rng.random_range(1..=2) {
        sizes.push(rng.random_range(2..=6));
    }
    sizes.push(outputs);
    let mut model = MlpModel::init(&sizes, Activation::Tanh, rng.random()).unwrap();
    // nonzero biases so every code path is exercised
    let p: Vec<f64> = model.parameters().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
    model.set_parameters(&p).unwrap();
    model
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central differences of `f` at `params`.
pub fn finite_differences(params: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + step;
            let up = f(&p);
            p[i] = orig - step;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}
