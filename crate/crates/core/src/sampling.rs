//! Deterministic samplers for the falsification checks.
//!
//! Points come from a Kronecker (additive recurrence) lattice with a seeded
//! Cranley–Patterson shift; matrices `z` mix fixed axis-aligned probes with
//! Gaussian directions and log-uniform magnitudes drawn from a seeded ChaCha
//! stream. Same seed, same samples, in the same order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::fields::{Ball, GradientMatrix};

/// Budget, seed and `|z|` range for one sampled check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub budget: usize,
    pub seed: u64,
    pub z_min: f64,
    pub z_max: f64,
}

impl SamplerConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            seed,
            z_min: 1e-2,
            z_max: 1e2,
        }
    }

    pub fn with_z_range(mut self, z_min: f64, z_max: f64) -> Self {
        self.z_min = z_min;
        self.z_max = z_max;
        self
    }
}

/// Generalised golden-ratio lattice in `[0, 1)^dim`.
#[derive(Debug, Clone)]
pub struct KroneckerLattice {
    alpha: Vec<f64>,
    shift: Vec<f64>,
    next: u64,
}

impl KroneckerLattice {
    pub fn new(dim: usize, seed: u64) -> Self {
        // φ_d is the positive root of x^{d+1} = x + 1
        let mut phi = 2.0f64;
        for _ in 0..64 {
            phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
        }
        let alpha = (1..=dim).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x1a77);
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        Self { alpha, shift, next: 1 }
    }

    pub fn next_point(&mut self, out: &mut [f64]) {
        let k = self.next as f64;
        self.next += 1;
        for ((o, a), s) in out.iter_mut().zip(&self.alpha).zip(&self.shift) {
            *o = (s + k * a).fract();
        }
    }
}

/// `count` lattice points inside `ball`, by rejection from its bounding cube.
pub fn points_in_ball(ball: &Ball, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = ball.dim();
    let mut lattice = KroneckerLattice::new(n, seed);
    let mut u = vec![0.0; n];
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        lattice.next_point(&mut u);
        let x: Vec<f64> = u
            .iter()
            .zip(ball.center())
            .map(|(t, c)| c + ball.radius() * (2.0 * t - 1.0))
            .collect();
        if ball.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Pairs `(x, x̃)` in `ball` from a `2n`-dimensional lattice.
pub fn pairs_in_ball(ball: &Ball, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = ball.dim();
    let mut lattice = KroneckerLattice::new(2 * n, seed);
    let mut u = vec![0.0; 2 * n];
    let mut out = Vec::with_capacity(count);
    let map = |t: &[f64]| -> Vec<f64> {
        t.iter()
            .zip(ball.center())
            .map(|(t, c)| c + ball.radius() * (2.0 * t - 1.0))
            .collect()
    };
    while out.len() < count {
        lattice.next_point(&mut u);
        let x = map(&u[..n]);
        let y = map(&u[n..]);
        if ball.contains(&x) && ball.contains(&y) {
            out.push((x, y));
        }
    }
    out
}

/// Breakpoints `c` together with `c ± δ` for every offset in [`STRADDLE_OFFSETS`].
pub fn special_x1_values(breakpoints: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for &c in breakpoints {
        out.push(c);
        for &d in &STRADDLE_OFFSETS {
            out.push(c - d);
            out.push(c + d);
        }
    }
    out
}

/// All ordered pairs of points whose first coordinates come from
/// [`special_x1_values`]; the other coordinates are the ball centre's. This
/// covers pairs straddling one breakpoint and pairs linking two of them.
pub fn breakpoint_pairs(ball: &Ball, breakpoints: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let values = special_x1_values(breakpoints);
    let at = |x1: f64| {
        let mut x = ball.center().to_vec();
        x[0] = x1;
        x
    };
    let mut out = Vec::new();
    for &a in &values {
        for &b in &values {
            if a == b {
                continue;
            }
            let (x, y) = (at(a), at(b));
            if ball.contains(&x) && ball.contains(&y) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Offsets used to straddle a discontinuity at `x₁ = c` from both sides.
pub const STRADDLE_OFFSETS: [f64; 7] = [1e-1, 3e-2, 1e-2, 1e-3, 1e-4, 1e-6, 1e-9];

/// Matrix samples for `z`: zero, `±t e_n^1` and `±t e_1^1` at logarithmic
/// scales, then random directions with log-uniform magnitude in
/// `[min_norm, max_norm]`.
pub fn z_samples(rows: usize, cols: usize, count: usize, min_norm: f64, max_norm: f64, seed: u64) -> Vec<GradientMatrix> {
    let mut out = Vec::with_capacity(count);
    out.push(GradientMatrix::zeros(rows, cols));
    let (lo, hi) = (min_norm.max(1e-300).ln(), max_norm.max(min_norm).ln());
    // axis probes take at most half the budget and always reach both ends
    let full = ((hi - lo) / 4f64.ln()).ceil() as usize + 1;
    let scales = full.min(count / 8).max(usize::from(count >= 5));
    for k in 0..scales {
        let s = if scales == 1 {
            lo.exp()
        } else {
            (lo + (hi - lo) * k as f64 / (scales - 1) as f64).exp()
        };
        for sign in [1.0, -1.0] {
            out.push(GradientMatrix::last_direction_unit(rows, cols, sign * s));
            let mut e11 = GradientMatrix::zeros(rows, cols);
            e11.set(0, 0, sign * s);
            out.push(e11);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x2a2a);
    while out.len() < count {
        let mut dir: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let t: f64 = rng.random();
        let radius = (lo + t * (hi - lo)).exp();
        dir.iter_mut().for_each(|v| *v *= radius / norm);
        out.push(GradientMatrix::from_rows(rows, cols, dir).expect("finite sample"));
    }
    out.truncate(count);
    out
}
