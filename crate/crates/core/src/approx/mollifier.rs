use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fields::{
    discrete_gradient, lp_norm, lp_norm_full, unit_ball_volume, Ball, GradientField, Grid, SampledField,
};

/// `exp(−1/(1 − s²))` for `s < 1`, else `0` (unnormalised bump, `s = |t|`).
pub fn bump(s: f64) -> f64 {
    if s < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// `∫_{B(0,1)} bump(|t|)^power dt` in `ℝⁿ` by composite Simpson in the radius.
pub fn bump_power_integral(n: usize, power: f64) -> f64 {
    const STEPS: usize = 20_000;
    let sphere = n as f64 * unit_ball_volume(n);
    let dr = 1.0 / STEPS as f64;
    let g = |r: f64| r.powi(n as i32 - 1) * bump(r).powf(power);
    let mut acc = g(0.0) + g(1.0);
    for k in 1..STEPS {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(k as f64 * dr);
    }
    sphere * acc * dr / 3.0
}

/// Normalising constant `C` with `∫ C·bump = 1` over the unit ball of `ℝⁿ`.
pub fn bump_constant(n: usize) -> f64 {
    1.0 / bump_power_integral(n, 1.0)
}

/// `‖φ‖_{L^{p'}(B(0,1))}` for the normalised kernel and `p' = p/(p−1)`.
pub fn kernel_dual_norm(n: usize, p: f64) -> f64 {
    let pd = p / (p - 1.0);
    bump_constant(n) * bump_power_integral(n, pd).powf(1.0 / pd)
}

/// The standard bump kernel at scale `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    pub eps: f64,
}

impl MollifierSpec {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(invalid(format!("ε must be positive, got {eps}")));
        }
        Ok(Self { eps })
    }

    /// Samples `φ_ε` at grid offsets; needs `ε ≥ 2h`.
    pub fn kernel(&self, grid: &Grid) -> Result<DiscreteKernel> {
        let h = grid.spacing();
        if self.eps < 2.0 * h * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!(
                "ε = {} is below twice the grid spacing {h}",
                self.eps
            )));
        }
        let n = grid.dim();
        let m = (self.eps / h - 1e-9).ceil() as isize;
        let c = bump_constant(n);
        let side = (2 * m + 1) as usize;
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let mut k = vec![0isize; n];
        for flat in 0..side.pow(n as u32) {
            let mut rest = flat;
            for axis in (0..n).rev() {
                k[axis] = (rest % side) as isize - m;
                rest /= side;
            }
            let s = (k.iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt() * h / self.eps;
            let w = bump(s);
            if w > 0.0 {
                offsets.push(k.clone());
                weights.push(w);
            }
        }
        let raw: f64 = weights.iter().sum();
        let mass = c * raw * (h / self.eps).powi(n as i32);
        weights.iter_mut().for_each(|w| *w /= raw);
        Ok(DiscreteKernel {
            eps: self.eps,
            margin: m as usize,
            offsets,
            weights,
            mass,
        })
    }
}

/// Grid samples of `φ_ε`, renormalised to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    pub eps: f64,
    /// Nodes dropped on every side of the output grid, `⌈ε/h⌉`.
    pub margin: usize,
    pub offsets: Vec<Vec<isize>>,
    pub weights: Vec<f64>,
    /// Riemann sum of `φ_ε` before renormalisation (ideally 1).
    pub mass: f64,
}

impl DiscreteKernel {
    pub fn mass_error(&self) -> f64 {
        (self.mass - 1.0).abs()
    }

    /// Output grid for `src`.
    pub fn output_grid(&self, src: &Grid) -> Result<Grid> {
        src.shrunk(self.margin).map_err(|_| {
            Error::Precondition(format!(
                "ε = {} leaves no output region on this grid",
                self.eps
            ))
        })
    }

    fn linear_offsets(&self, src: &Grid) -> Vec<isize> {
        self.offsets
            .iter()
            .map(|k| k.iter().enumerate().map(|(axis, &v)| v * src.stride(axis) as isize).sum())
            .collect()
    }

    /// Source node under output node `node` of [`Self::output_grid`].
    pub fn source_node(&self, src: &Grid, out: &Grid, node: usize) -> usize {
        let mut idx = vec![0; src.dim()];
        out.multi_index(node, &mut idx);
        idx.iter_mut().for_each(|i| *i += self.margin);
        src.linear_index(&idx)
    }

    /// Convolves `width` values per node of `src` and returns the values on
    /// the output grid.
    pub fn convolve(&self, src: &Grid, data: &[f64], width: usize) -> Result<(Grid, Vec<f64>)> {
        let out = self.output_grid(src)?;
        let offs = self.linear_offsets(src);
        let mut values = vec![0.0; out.node_count() * width];
        values.par_chunks_mut(width).enumerate().for_each(|(node, o)| {
            let centre = self.source_node(src, &out, node) as isize;
            for (off, w) in offs.iter().zip(&self.weights) {
                let s = (centre + off) as usize * width;
                for (ov, v) in o.iter_mut().zip(&data[s..s + width]) {
                    *ov += w * v;
                }
            }
        });
        Ok((out, values))
    }

    /// `Σ_k w_k g(x − k h)` at one output node, for a per-source-node function.
    pub fn apply_at<F: Fn(usize) -> f64>(&self, src: &Grid, out: &Grid, node: usize, g: F) -> f64 {
        let centre = self.source_node(src, out, node);
        let mut idx = vec![0; src.dim()];
        src.multi_index(centre, &mut idx);
        let mut acc = 0.0;
        let mut k = vec![0usize; src.dim()];
        for (off, w) in self.offsets.iter().zip(&self.weights) {
            for axis in 0..k.len() {
                k[axis] = (idx[axis] as isize + off[axis]) as usize;
            }
            acc += w * g(src.linear_index(&k));
        }
        acc
    }
}

/// `u_ε = u ∗ φ_ε` on the grid shrunk by `⌈ε/h⌉` nodes per side.
pub fn mollify(u: &SampledField, m: &MollifierSpec) -> Result<SampledField> {
    let kernel = m.kernel(u.grid())?;
    let (out, values) = kernel.convolve(u.grid(), u.values(), u.target_dim())?;
    SampledField::new(out, u.target_dim(), values)
}

/// `Du ∗ φ_ε` with the nodal finite-difference gradient, on the same output
/// grid as [`mollify`].
pub fn mollified_gradient(u: &SampledField, m: &MollifierSpec) -> Result<GradientField> {
    let du = discrete_gradient(u)?;
    mollify_gradient_field(&du, &m.kernel(u.grid())?)
}

pub(crate) fn mollify_gradient_field(du: &GradientField, kernel: &DiscreteKernel) -> Result<GradientField> {
    let (out, values) = kernel.convolve(du.grid(), du.data(), du.stride())?;
    GradientField::new(out, du.rows(), values)
}

/// Outcome of comparing `max |Du_ε|` with `c₁ ε^{−n/p}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientBoundReport {
    pub eps: f64,
    pub p: f64,
    /// `‖Du‖_{L^p}` over the region used for `c₁`.
    pub du_norm: f64,
    /// `‖φ‖_{L^{p'}(B(0,1))}`.
    pub kernel_norm: f64,
    pub c1: f64,
    pub bound: f64,
    pub max_grad: f64,
    pub passed: bool,
}

/// Relative slack allowed on the bound.
pub const GRADIENT_BOUND_SLACK: f64 = 1e-2;

/// Checks `max |Du_ε| ≤ c₁ ε^{−n/p} (1 + 10⁻²)` with
/// `c₁ = ‖Du‖_{L^p} ‖φ‖_{L^{p'}(B(0,1))}`. The norm of `Du` is taken over
/// `region` when given, otherwise over the whole grid; the maximum runs over
/// output nodes inside `region` (or all of them).
pub fn gradient_bound_check(u: &SampledField, m: &MollifierSpec, p: f64, region: Option<&Ball>) -> Result<GradientBoundReport> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(invalid(format!("need p > 1, got {p}")));
    }
    let du = discrete_gradient(u)?;
    let du_norm = match region {
        Some(b) => lp_norm(&du, p, b)?,
        None => lp_norm_full(&du, p),
    };
    let kernel = m.kernel(u.grid())?;
    let du_eps = mollify_gradient_field(&du, &kernel)?;
    let g = du_eps.grid();
    let maxes: Vec<f64> = (0..g.node_count())
        .into_par_iter()
        .map(|node| match region {
            Some(b) if !b.contains(&g.point(node)) => 0.0,
            _ => du_eps.at(node).norm(),
        })
        .collect();
    let max_grad = maxes.into_iter().fold(0.0, f64::max);
    let n = u.grid().dim() as f64;
    let kernel_norm = kernel_dual_norm(u.grid().dim(), p);
    let c1 = du_norm * kernel_norm;
    let bound = c1 * m.eps.powf(-n / p);
    Ok(GradientBoundReport {
        eps: m.eps,
        p,
        du_norm,
        kernel_norm,
        c1,
        bound,
        max_grad,
        passed: max_grad <= bound * (1.0 + GRADIENT_BOUND_SLACK),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::TestField;

    fn grid(cells: usize) -> Grid {
        Grid::cube(2, -1.0, 1.0, cells).unwrap()
    }

    #[test]
    fn bump_integral_in_the_plane() {
        // ∫_{B(0,1) ⊂ ℝ²} exp(−1/(1−|x|²)) dx ≈ 0.466512
        assert!((bump_power_integral(2, 1.0) - 0.466_512).abs() < 1e-5);
    }

    #[test]
    fn kernel_weights_sum_to_one_and_mass_converges() {
        let g = grid(256);
        let k = MollifierSpec::new(0.1).unwrap().kernel(&g).unwrap();
        assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(k.margin, 13);
        let coarse = MollifierSpec::new(0.05).unwrap().kernel(&g).unwrap();
        assert!(k.mass_error() < 1e-4 && k.mass_error() < coarse.mass_error());
        assert!(MollifierSpec::new(0.01).unwrap().kernel(&g).is_err());
    }

    #[test]
    fn constants_and_affine_fields_are_preserved() {
        let g = grid(64);
        let m = MollifierSpec::new(0.1).unwrap();
        let c = SampledField::from_fn(g.clone(), 2, |_, o| o.copy_from_slice(&[2.5, -1.0])).unwrap();
        let cm = mollify(&c, &m).unwrap();
        assert!(cm.values().chunks(2).all(|v| (v[0] - 2.5).abs() < 1e-14 && (v[1] + 1.0).abs() < 1e-14));
        let a = SampledField::from_fn(g, 1, |x, o| o[0] = 0.7 * x[0] - 1.3 * x[1] + 0.2).unwrap();
        let am = mollify(&a, &m).unwrap();
        for node in 0..am.grid().node_count() {
            let x = am.grid().point(node);
            assert!((am.value(node)[0] - (0.7 * x[0] - 1.3 * x[1] + 0.2)).abs() < 1e-9);
        }
    }

    #[test]
    fn abs_value_is_lifted_at_the_kink() {
        let g = Grid::cube(2, -1.0, 1.0, 128).unwrap();
        let u = SampledField::from_fn(g, 1, |x, o| o[0] = x[0].abs()).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05] {
            let um = mollify(&u, &MollifierSpec::new(eps).unwrap()).unwrap();
            let og = um.grid();
            let mid = og.counts()[0] / 2;
            let node = og.linear_index(&[mid, mid]);
            assert!(um.value(node)[0] > og.point(node)[0].abs());
            let err = (0..og.node_count())
                .map(|k| (um.value(k)[0] - og.point(k)[0].abs()).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err < last);
            last = err;
        }
    }

    #[test]
    fn bound_scales_with_eps() {
        let u = TestField::random_smooth(2, 2, 4).sample(&grid(128)).unwrap();
        let a = gradient_bound_check(&u, &MollifierSpec::new(0.2).unwrap(), 2.0, None).unwrap();
        let b = gradient_bound_check(&u, &MollifierSpec::new(0.1).unwrap(), 2.0, None).unwrap();
        assert!(a.passed && b.passed);
        assert!((b.bound / a.bound - 2f64.powf(2.0 / 2.0)).abs() < 1e-12);
        let c = SampledField::from_fn(grid(64), 1, |_, o| o[0] = 1.0).unwrap();
        let r = gradient_bound_check(&c, &MollifierSpec::new(0.1).unwrap(), 2.0, None).unwrap();
        assert_eq!(r.max_grad, 0.0);
        assert!(r.passed);
    }
}
