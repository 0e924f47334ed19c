use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::fields::{GradientMatrix, Grid, SampledField};

/// Closed-form fields used by the experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum TestField {
    /// `u(x) = A x + b`.
    Affine { a: GradientMatrix, b: Vec<f64> },
    /// `u¹ = |x₁ − r|^exponent`; further components are the smooth
    /// `sin(x₁ + 2x₂)/2`, `cos(2x₁ − x₂)/2`, …
    Kinked { r: f64, exponent: f64, target_dim: usize },
    /// `Σ amp · sin(k·x + phase)` per component.
    Fourier { target_dim: usize, modes: Vec<Vec<(f64, Vec<f64>, f64)>> },
    /// `x₁² − x₂²`.
    Saddle,
}

impl TestField {
    /// A few low-frequency Fourier modes per component with seeded amplitudes.
    pub fn random_smooth(n: usize, target_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0xf1e1d);
        let modes = (0..target_dim)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        let amp = rng.random_range(-1.0..1.0);
                        let k: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                        let phase = rng.random_range(0.0..std::f64::consts::TAU);
                        (amp, k, phase)
                    })
                    .collect()
            })
            .collect();
        TestField::Fourier { target_dim, modes }
    }

    pub fn target_dim(&self) -> usize {
        match self {
            TestField::Affine { a, .. } => a.rows(),
            TestField::Kinked { target_dim, .. } | TestField::Fourier { target_dim, .. } => *target_dim,
            TestField::Saddle => 1,
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            TestField::Affine { a, b } => {
                for (alpha, o) in out.iter_mut().enumerate() {
                    *o = b[alpha] + (0..x.len()).map(|i| a.get(alpha, i) * x[i]).sum::<f64>();
                }
            }
            TestField::Kinked { r, exponent, .. } => {
                out[0] = (x[0] - r).abs().powf(*exponent);
                for (alpha, o) in out.iter_mut().enumerate().skip(1) {
                    let k = alpha as f64;
                    *o = if alpha % 2 == 1 {
                        0.5 * (k * x[0] + 2.0 * x[1]).sin()
                    } else {
                        0.5 * (2.0 * x[0] - k * x[1]).cos()
                    };
                }
            }
            TestField::Fourier { modes, .. } => {
                for (o, comp) in out.iter_mut().zip(modes) {
                    *o = comp
                        .iter()
                        .map(|(amp, k, ph)| amp * (k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + ph).sin())
                        .sum();
                }
            }
            TestField::Saddle => out[0] = x[0] * x[0] - x[1] * x[1],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            TestField::Affine { a, b } if a.cols() != n || b.len() != a.rows() => {
                Err(invalid("affine field shape does not match the grid"))
            }
            TestField::Kinked { exponent, target_dim, .. } if !(*exponent > 0.0) || *target_dim == 0 => {
                Err(invalid("kinked field needs a positive exponent and N ≥ 1"))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, grid: &Grid) -> Result<SampledField> {
        self.validate(grid.dim())?;
        SampledField::from_fn(grid.clone(), self.target_dim(), |x, out| self.eval(x, out))
    }
}
