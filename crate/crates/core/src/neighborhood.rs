//! Neighborhood distributions around an input point, used both to evaluate
//! explanations and to regularize training.
//!
//! Sampling is counter based: the draw for `(seed, counter)` is a fixed
//! function of those two numbers, so callers that hand out distinct counters
//! get independent, reproducible streams regardless of call order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NeighborhoodKind {
    /// Independent `N(x_i, sigma^2)` per coordinate.
    Gaussian { sigma: f64 },
    /// Independent `U[x_i - radius, x_i + radius]` per coordinate.
    Uniform { radius: f64 },
}

impl NeighborhoodKind {
    pub fn width(&self) -> f64 {
        match *self {
            NeighborhoodKind::Gaussian { sigma } => sigma,
            NeighborhoodKind::Uniform { radius } => radius,
        }
    }

    pub fn with_width(self, width: f64) -> Self {
        match self {
            NeighborhoodKind::Gaussian { .. } => NeighborhoodKind::Gaussian { sigma: width },
            NeighborhoodKind::Uniform { .. } => NeighborhoodKind::Uniform { radius: width },
        }
    }

    /// Per-coordinate variance of the perturbation.
    pub fn variance(&self) -> f64 {
        match *self {
            NeighborhoodKind::Gaussian { sigma } => sigma * sigma,
            NeighborhoodKind::Uniform { radius } => radius * radius / 3.0,
        }
    }

    fn perturbation(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            NeighborhoodKind::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            NeighborhoodKind::Uniform { radius } => rng.random_range(-radius..=radius),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    #[serde(flatten)]
    pub kind: NeighborhoodKind,
    /// Number of points drawn per neighborhood.
    pub m: usize,
    pub seed: u64,
}

impl NeighborhoodSpec {
    pub fn gaussian(sigma: f64, m: usize, seed: u64) -> Self {
        Self {
            kind: NeighborhoodKind::Gaussian { sigma },
            m,
            seed,
        }
    }

    pub fn uniform(radius: f64, m: usize, seed: u64) -> Self {
        Self {
            kind: NeighborhoodKind::Uniform { radius },
            m,
            seed,
        }
    }

    pub fn with_m(self, m: usize) -> Self {
        Self { m, ..self }
    }

    pub fn with_width(self, width: f64) -> Self {
        Self {
            kind: self.kind.with_width(width),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.kind.width();
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::BadParameter(format!("neighborhood width must be positive, got {w}")));
        }
        if self.m == 0 {
            return Err(Error::BadParameter("neighborhood needs at least one sample".into()));
        }
        Ok(())
    }

    /// The generator for one draw.
    pub fn rng(&self, counter: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(counter);
        rng
    }

    /// `m x d` matrix of points drawn around `x`.
    pub fn sample(&self, x: &[f64], counter: u64) -> Result<Matrix> {
        self.validate()?;
        let mut rng = self.rng(counter);
        Ok(self.sample_with(&mut rng, x))
    }

    pub(crate) fn sample_with(&self, rng: &mut ChaCha8Rng, x: &[f64]) -> Matrix {
        let mut out = Matrix::zeros(self.m, x.len());
        for j in 0..self.m {
            for (v, &xi) in out.row_mut(j).iter_mut().zip(x) {
                *v = xi + self.kind.perturbation(rng);
            }
        }
        out
    }

    /// Like [`sample`](Self::sample) but only coordinate `dim` is perturbed.
    pub fn sample_one_dim(&self, x: &[f64], dim: usize, counter: u64) -> Result<Matrix> {
        self.validate()?;
        if dim >= x.len() {
            return Err(Error::BadIndex { index: dim, dim: x.len() });
        }
        let mut rng = self.rng(counter);
        Ok(self.sample_one_dim_with(&mut rng, x, dim))
    }

    pub(crate) fn sample_one_dim_with(&self, rng: &mut ChaCha8Rng, x: &[f64], dim: usize) -> Matrix {
        let mut out = Matrix::zeros(self.m, x.len());
        for j in 0..self.m {
            let row = out.row_mut(j);
            row.copy_from_slice(x);
            row[dim] += self.kind.perturbation(rng);
        }
        out
    }
}

/// Derives an independent counter from `(counter, index)`.
///
/// Used where one logical draw fans out into several (for example one
/// explainer call per neighbor).
pub fn substream(counter: u64, index: u64) -> u64 {
    splitmix64(splitmix64(counter) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_stats(m: &Matrix, j: usize) -> (f64, f64) {
        let col = m.column(j);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn degenerate_width_collapses() {
        let x = [0.3, -1.2, 4.0];
        let s = NeighborhoodSpec::gaussian(1e-12, 50, 3).sample(&x, 0).unwrap();
        for row in s.iter_rows() {
            assert!(row.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-10));
        }
        let s = NeighborhoodSpec::gaussian(1e-12, 20, 3).sample_one_dim(&x, 1, 5).unwrap();
        for row in s.iter_rows() {
            assert!(row.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn gaussian_moments() {
        let (sigma, m) = (0.5, 10_000);
        let x = [1.0, -2.0, 0.0];
        let s = NeighborhoodSpec::gaussian(sigma, m, 17).sample(&x, 3).unwrap();
        for (j, &xj) in x.iter().enumerate() {
            let (mean, std) = column_stats(&s, j);
            assert!((mean - xj).abs() < 3.0 * sigma / (m as f64).sqrt());
            assert!((std - sigma).abs() < 0.05 * sigma);
        }
    }

    #[test]
    fn gaussian_isotropy() {
        let s = NeighborhoodSpec::gaussian(0.5, 10_000, 2).sample(&[0.0; 3], 0).unwrap();
        for a in 0..3 {
            for b in a + 1..3 {
                let (ma, sa) = column_stats(&s, a);
                let (mb, sb) = column_stats(&s, b);
                let cov = s.iter_rows().map(|r| (r[a] - ma) * (r[b] - mb)).sum::<f64>() / 9_999.0;
                assert!((cov / (sa * sb)).abs() < 0.05);
            }
        }
    }

    #[test]
    fn uniform_support() {
        let x = [0.2, 0.9];
        let s = NeighborhoodSpec::uniform(0.05, 2000, 1).sample(&x, 9).unwrap();
        for row in s.iter_rows() {
            for (v, xi) in row.iter().zip(&x) {
                assert!(*v >= xi - 0.05 && *v <= xi + 0.05);
            }
        }
    }

    #[test]
    fn one_dim_leaves_other_coordinates() {
        let x = [0.5, 1.5, -0.5, 2.0];
        let spec = NeighborhoodSpec::gaussian(0.5, 5000, 4);
        let s = spec.sample_one_dim(&x, 2, 0).unwrap();
        for row in s.iter_rows() {
            assert_eq!((row[0], row[1], row[3]), (x[0], x[1], x[3]));
        }
        let (_, std) = column_stats(&s, 2);
        assert!((std - 0.5).abs() < 0.025);
        let s0 = spec.sample_one_dim(&x, 0, 1).unwrap();
        for row in s0.iter_rows() {
            assert_eq!(&row[1..], &x[1..]);
        }
        assert!(matches!(spec.sample_one_dim(&x, 4, 0), Err(Error::BadIndex { .. })));
    }

    #[test]
    fn counters_are_reproducible_and_distinct() {
        let spec = NeighborhoodSpec::gaussian(0.1, 8, 42);
        let x = [0.0, 1.0];
        assert_eq!(spec.sample(&x, 5).unwrap(), spec.sample(&x, 5).unwrap());
        assert_ne!(spec.sample(&x, 5).unwrap(), spec.sample(&x, 6).unwrap());
        let other_seed = NeighborhoodSpec { seed: 43, ..spec };
        assert_ne!(spec.sample(&x, 5).unwrap(), other_seed.sample(&x, 5).unwrap());
        assert_ne!(substream(1, 0), substream(1, 1));
        assert_ne!(substream(1, 0), substream(0, 1));
    }

    #[test]
    fn invalid_specs() {
        assert!(NeighborhoodSpec::gaussian(0.0, 5, 0).sample(&[0.0], 0).is_err());
        assert!(NeighborhoodSpec::uniform(0.1, 0, 0).sample(&[0.0], 0).is_err());
    }

    #[test]
    fn json_shape() {
        let spec = NeighborhoodSpec::gaussian(0.5, 65, 1);
        let v = serde_json::to_value(spec).unwrap();
        assert_eq!(v, serde_json::json!({"kind": "gaussian", "sigma": 0.5, "m": 65, "seed": 1}));
        let back: NeighborhoodSpec =
            serde_json::from_str(r#"{"kind":"uniform","radius":0.05,"m":5,"seed":3}"#).unwrap();
        assert_eq!(back, NeighborhoodSpec::uniform(0.05, 5, 3));
    }
}
