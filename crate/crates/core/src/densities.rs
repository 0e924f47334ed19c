//! Closed-form weights `a(x)` and densities `f(x, z)`.
//!
//! Every weight used here depends on `x` only through `x₁`. Densities take
//! `z` as an `N × n` matrix; the distinguished entry `z_n^1` is row 0, last
//! column.

use crate::error::{invalid, mismatch, Result};
use crate::fields::MatRef;

/// Exponents and dimensions shared by a family of experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentConfig {
    pub p: f64,
    pub q: f64,
    /// Spatial dimension `n`.
    pub n: usize,
    /// Target dimension `N`.
    pub target_dim: usize,
    pub sigma: f64,
}

impl ExponentConfig {
    pub fn new(p: f64, q: f64, n: usize, target_dim: usize, sigma: f64) -> Result<Self> {
        let cfg = Self {
            p,
            q,
            n,
            target_dim,
            sigma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !(self.q >= self.p) || !self.q.is_finite() {
            return Err(invalid(format!(
                "exponents need 1 < p ≤ q, got p = {}, q = {}",
                self.p, self.q
            )));
        }
        if self.n < 2 || self.target_dim < 1 {
            return Err(invalid("need n ≥ 2 and N ≥ 1"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid(format!("σ must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Weight `a(x) ≥ 0`, a function of `x₁`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Zero,
    Constant(f64),
    /// `coef · |x₁ − shift|^σ`.
    Holder { coef: f64, shift: f64, sigma: f64 },
    /// `0` for `x₁ ≤ 0`, `x₁^σ` on `(0, r]`, `x₁^σ + h` beyond `r`.
    StepHolder { r: f64, sigma: f64, h: f64 },
    /// `0` for `x₁ ≤ r₁`, `(x₁ − r₁)^σ` on `(r₁, r₂]`, `(x₁ − r₁)^σ + h` beyond `r₂`.
    TwoThreshold { r1: f64, r2: f64, sigma: f64, h: f64 },
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            WeightSpec::Zero => true,
            WeightSpec::Constant(c) => c >= 0.0 && c.is_finite(),
            WeightSpec::Holder { coef, shift, sigma } => coef >= 0.0 && shift.is_finite() && sigma > 0.0,
            WeightSpec::StepHolder { r, sigma, h } => r > 0.0 && sigma > 0.0 && h > 0.0,
            WeightSpec::TwoThreshold { r1, r2, sigma, h } => r1 < r2 && sigma > 0.0 && h > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid weight parameters: {self:?}")))
        }
    }

    /// Evaluates the weight at `x` (only `x₁` is read).
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_x1(x[0])
    }

    pub fn eval_x1(&self, x1: f64) -> f64 {
        match *self {
            WeightSpec::Zero => 0.0,
            WeightSpec::Constant(c) => c,
            WeightSpec::Holder { coef, shift, sigma } => coef * (x1 - shift).abs().powf(sigma),
            WeightSpec::StepHolder { r, sigma, h } => {
                if x1 <= 0.0 {
                    0.0
                } else if x1 <= r {
                    x1.powf(sigma)
                } else {
                    x1.powf(sigma) + h
                }
            }
            WeightSpec::TwoThreshold { r1, r2, sigma, h } => {
                if x1 <= r1 {
                    0.0
                } else if x1 <= r2 {
                    (x1 - r1).powf(sigma)
                } else {
                    (x1 - r1).powf(sigma) + h
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, WeightSpec::Zero | WeightSpec::Constant(_))
    }

    /// `x₁` values where the weight jumps.
    pub fn jumps(&self) -> Vec<f64> {
        match *self {
            WeightSpec::StepHolder { r, .. } => vec![r],
            WeightSpec::TwoThreshold { r2, .. } => vec![r2],
            _ => vec![],
        }
    }

    /// `x₁` values where the weight is continuous but not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            WeightSpec::Holder { shift, .. } => vec![shift],
            WeightSpec::StepHolder { .. } => vec![0.0],
            WeightSpec::TwoThreshold { r1, .. } => vec![r1],
            _ => vec![],
        }
    }

    /// Exact minimiser of `x₁ ↦ a` over `[lo, hi]`; ties go to the smallest `x₁`.
    ///
    /// The step weights are nondecreasing and lower semicontinuous, so the
    /// minimum sits at the left end.
    pub fn argmin_x1(&self, lo: f64, hi: f64) -> f64 {
        match *self {
            WeightSpec::Holder { coef, shift, .. } if coef > 0.0 => shift.clamp(lo, hi),
            _ => lo,
        }
    }
}

/// `g(x₁, t) = max{(max{t,0})^q − (max{x₁,0})^q, 0}`.
pub fn eval_g(x1: f64, t: f64, q: f64) -> f64 {
    let tp = t.max(0.0);
    let xp = x1.max(0.0);
    if tp <= xp {
        0.0
    } else {
        (tp.powf(q) - xp.powf(q)).max(0.0)
    }
}

/// `∂g/∂t`, choosing `0` at the kinks `t = 0` and `t = x₁ > 0`.
pub fn eval_g_dt(x1: f64, t: f64, q: f64) -> f64 {
    if t > 0.0 && t > x1.max(0.0) {
        q * t.powf(q - 1.0)
    } else {
        0.0
    }
}

/// `z`-part of a composite term.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseTerm {
    /// `|z|^e`.
    NormPower(f64),
    /// `(max{z[row][col], 0})^e`.
    PositivePart { row: usize, col: usize, exponent: f64 },
    /// `(max{−z[row][col], 0})^e`.
    NegativePart { row: usize, col: usize, exponent: f64 },
    /// `g(x₁, z_n^1)` with exponent `q`; depends on `x` itself.
    G { q: f64 },
}

impl BaseTerm {
    fn eval(&self, x1: f64, z: MatRef<'_>) -> f64 {
        match *self {
            BaseTerm::NormPower(e) => power_of_norm(z.norm(), e),
            BaseTerm::PositivePart { row, col, exponent } => z.get(row, col).max(0.0).powf(exponent),
            BaseTerm::NegativePart { row, col, exponent } => (-z.get(row, col)).max(0.0).powf(exponent),
            BaseTerm::G { q } => eval_g(x1, z.last_direction_first_component(), q),
        }
    }

    fn add_grad(&self, x1: f64, z: MatRef<'_>, scale: f64, out: &mut [f64]) {
        match *self {
            BaseTerm::NormPower(e) => add_norm_power_grad(z, e, scale, out),
            BaseTerm::PositivePart { row, col, exponent } => {
                let v = z.get(row, col);
                if v > 0.0 {
                    out[row * z.cols() + col] += scale * exponent * v.powf(exponent - 1.0);
                }
            }
            BaseTerm::NegativePart { row, col, exponent } => {
                let v = -z.get(row, col);
                if v > 0.0 {
                    out[row * z.cols() + col] -= scale * exponent * v.powf(exponent - 1.0);
                }
            }
            BaseTerm::G { q } => {
                out[z.cols() - 1] += scale * eval_g_dt(x1, z.last_direction_first_component(), q);
            }
        }
    }

    fn check_dims(&self, rows: usize, cols: usize) -> Result<()> {
        match *self {
            BaseTerm::PositivePart { row, col, .. } | BaseTerm::NegativePart { row, col, .. }
                if row >= rows || col >= cols =>
            {
                Err(mismatch(format!("term entry ({row}, {col}) outside a {rows}×{cols} matrix")))
            }
            _ => Ok(()),
        }
    }
}

/// One `w(x) · base(z)` summand of a composite density.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeTerm {
    pub weight: WeightSpec,
    pub base: BaseTerm,
}

/// Closed-form density `f(x, z)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    /// `|z|^p + a(x)|z|^q`.
    Zhikov { p: f64, q: f64, weight: WeightSpec },
    /// `|z|^p + a(x)(max{z_n^1, 0})^q`.
    Example1 { p: f64, q: f64, weight: WeightSpec },
    /// `|z|^p + g(x₁, z_n^1)`.
    Example2 { p: f64, q: f64 },
    /// `|z|^p`.
    PPower { p: f64 },
    /// `Σ w_k(x) base_k(z)`.
    Composite(Vec<CompositeTerm>),
}

#[inline]
fn power_of_norm(norm: f64, e: f64) -> f64 {
    if e == 2.0 {
        norm * norm
    } else {
        norm.powf(e)
    }
}

fn add_norm_power_grad(z: MatRef<'_>, e: f64, scale: f64, out: &mut [f64]) {
    let norm = z.norm();
    if norm == 0.0 {
        return;
    }
    let c = scale * e * norm.powf(e - 2.0);
    for (o, v) in out.iter_mut().zip(z.data()) {
        *o += c * v;
    }
}

impl DensitySpec {
    pub fn zhikov(p: f64, q: f64, weight: WeightSpec) -> Self {
        DensitySpec::Zhikov { p, q, weight }
    }

    pub fn example1(p: f64, q: f64, weight: WeightSpec) -> Self {
        DensitySpec::Example1 { p, q, weight }
    }

    pub fn example2(p: f64, q: f64) -> Self {
        DensitySpec::Example2 { p, q }
    }

    pub fn validate(&self) -> Result<()> {
        let pq = |p: f64, q: f64| {
            if p > 1.0 && q >= p && q.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("need 1 < p ≤ q, got p = {p}, q = {q}")))
            }
        };
        match self {
            DensitySpec::Zhikov { p, q, weight } | DensitySpec::Example1 { p, q, weight } => {
                pq(*p, *q)?;
                weight.validate()
            }
            DensitySpec::Example2 { p, q } => pq(*p, *q),
            DensitySpec::PPower { p } => pq(*p, *p),
            DensitySpec::Composite(terms) => {
                if terms.is_empty() {
                    return Err(invalid("composite density needs at least one term"));
                }
                for t in terms {
                    t.weight.validate()?;
                    let e = match t.base {
                        BaseTerm::NormPower(e) => e,
                        BaseTerm::PositivePart { exponent, .. } | BaseTerm::NegativePart { exponent, .. } => {
                            exponent
                        }
                        BaseTerm::G { q } => q,
                    };
                    if !(e > 0.0) || !e.is_finite() {
                        return Err(invalid(format!("term exponent must be positive, got {e}")));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DensitySpec::Zhikov { .. } => "zhikov",
            DensitySpec::Example1 { .. } => "example1",
            DensitySpec::Example2 { .. } => "example2",
            DensitySpec::PPower { .. } => "ppower",
            DensitySpec::Composite(_) => "composite",
        }
    }

    /// Lower growth exponent `p`, when the density is one of the named families.
    pub fn p(&self) -> Option<f64> {
        match *self {
            DensitySpec::Zhikov { p, .. }
            | DensitySpec::Example1 { p, .. }
            | DensitySpec::Example2 { p, .. }
            | DensitySpec::PPower { p } => Some(p),
            DensitySpec::Composite(_) => None,
        }
    }

    pub fn q(&self) -> Option<f64> {
        match *self {
            DensitySpec::Zhikov { q, .. } | DensitySpec::Example1 { q, .. } | DensitySpec::Example2 { q, .. } => {
                Some(q)
            }
            DensitySpec::PPower { p } => Some(p),
            DensitySpec::Composite(_) => None,
        }
    }

    /// Densities bounded below by `|z|^p` by construction.
    pub fn has_p_lower_bound(&self) -> bool {
        !matches!(self, DensitySpec::Composite(_))
    }

    pub fn weight(&self) -> Option<&WeightSpec> {
        match self {
            DensitySpec::Zhikov { weight, .. } | DensitySpec::Example1 { weight, .. } => Some(weight),
            _ => None,
        }
    }

    /// `true` when `f(x, z)` does not depend on `x`.
    pub fn is_x_independent(&self) -> bool {
        match self {
            DensitySpec::Zhikov { weight, .. } | DensitySpec::Example1 { weight, .. } => weight.is_constant(),
            DensitySpec::Example2 { .. } => false,
            DensitySpec::PPower { .. } => true,
            DensitySpec::Composite(terms) => terms
                .iter()
                .all(|t| t.weight.is_constant() && !matches!(t.base, BaseTerm::G { .. })),
        }
    }

    /// Jump locations in `x₁` of every weight involved.
    pub fn jumps(&self) -> Vec<f64> {
        match self {
            DensitySpec::Zhikov { weight, .. } | DensitySpec::Example1 { weight, .. } => weight.jumps(),
            DensitySpec::Composite(terms) => terms.iter().flat_map(|t| t.weight.jumps()).collect(),
            _ => vec![],
        }
    }

    /// Unchecked evaluation; callers guarantee `x.len() == z.cols()`.
    #[inline]
    pub fn value(&self, x: &[f64], z: MatRef<'_>) -> f64 {
        match self {
            DensitySpec::Zhikov { p, q, weight } => {
                let norm = z.norm();
                let a = weight.eval(x);
                let mut v = power_of_norm(norm, *p);
                if a != 0.0 {
                    v += a * power_of_norm(norm, *q);
                }
                v
            }
            DensitySpec::Example1 { p, q, weight } => {
                let mut v = power_of_norm(z.norm(), *p);
                let t = z.last_direction_first_component();
                if t > 0.0 {
                    v += weight.eval(x) * t.powf(*q);
                }
                v
            }
            DensitySpec::Example2 { p, q } => {
                power_of_norm(z.norm(), *p) + eval_g(x[0], z.last_direction_first_component(), *q)
            }
            DensitySpec::PPower { p } => power_of_norm(z.norm(), *p),
            DensitySpec::Composite(terms) => terms
                .iter()
                .map(|t| {
                    let w = t.weight.eval(x);
                    if w == 0.0 {
                        0.0
                    } else {
                        w * t.base.eval(x[0], z)
                    }
                })
                .sum(),
        }
    }

    /// Evaluates `f(x, z)` after checking dimensions against `z`.
    pub fn eval(&self, x: &[f64], z: MatRef<'_>) -> Result<f64> {
        if x.len() != z.cols() {
            return Err(mismatch(format!(
                "x ∈ ℝ^{} but z has {} columns",
                x.len(),
                z.cols()
            )));
        }
        if let DensitySpec::Composite(terms) = self {
            for t in terms {
                t.base.check_dims(z.rows(), z.cols())?;
            }
        }
        Ok(self.value(x, z))
    }

    /// Adds `∂f/∂z(x, z)` into `out` (row-major, same shape as `z`). At the
    /// kinks of `max{·, 0}` the zero one-sided derivative is used.
    pub fn add_grad_z(&self, x: &[f64], z: MatRef<'_>, out: &mut [f64]) {
        match self {
            DensitySpec::Zhikov { p, q, weight } => {
                add_norm_power_grad(z, *p, 1.0, out);
                let a = weight.eval(x);
                if a != 0.0 {
                    add_norm_power_grad(z, *q, a, out);
                }
            }
            DensitySpec::Example1 { p, q, weight } => {
                add_norm_power_grad(z, *p, 1.0, out);
                let t = z.last_direction_first_component();
                if t > 0.0 {
                    out[z.cols() - 1] += weight.eval(x) * q * t.powf(q - 1.0);
                }
            }
            DensitySpec::Example2 { p, q } => {
                add_norm_power_grad(z, *p, 1.0, out);
                out[z.cols() - 1] += eval_g_dt(x[0], z.last_direction_first_component(), *q);
            }
            DensitySpec::PPower { p } => add_norm_power_grad(z, *p, 1.0, out),
            DensitySpec::Composite(terms) => {
                for t in terms {
                    let w = t.weight.eval(x);
                    if w != 0.0 {
                        t.base.add_grad(x[0], z, w, out);
                    }
                }
            }
        }
    }

    /// A point of `B̄(x, ε)` expected to minimise `y ↦ f(y, z)` for every `z`,
    /// when the density's structure provides one.
    ///
    /// Product densities `f₁(z) + a(y) f₂(z)` use the exact minimiser of the
    /// weight along the `x₁` axis. For [`DensitySpec::Example2`] the candidate is
    /// `(x₁ + ε, x₂, …, xₙ)` since `g` is nonincreasing in `x₁`.
    pub fn min_point_candidate(&self, x: &[f64], eps: f64) -> Option<Vec<f64>> {
        let shifted = |x1: f64| {
            let mut y = x.to_vec();
            y[0] = x1;
            y
        };
        match self {
            DensitySpec::Zhikov { weight, .. } | DensitySpec::Example1 { weight, .. } => {
                Some(shifted(weight.argmin_x1(x[0] - eps, x[0] + eps)))
            }
            DensitySpec::Example2 { .. } => Some(shifted(x[0] + eps)),
            DensitySpec::PPower { .. } => Some(x.to_vec()),
            DensitySpec::Composite(terms) => {
                let mut varying = terms
                    .iter()
                    .filter(|t| !t.weight.is_constant() || matches!(t.base, BaseTerm::G { .. }));
                match (varying.next(), varying.next()) {
                    (None, _) => Some(x.to_vec()),
                    (Some(t), None) => match t.base {
                        BaseTerm::G { .. } if t.weight.is_constant() => Some(shifted(x[0] + eps)),
                        BaseTerm::G { .. } => None,
                        _ => Some(shifted(t.weight.argmin_x1(x[0] - eps, x[0] + eps))),
                    },
                    _ => None,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GradientMatrix;

    const STEP: WeightSpec = WeightSpec::StepHolder {
        r: 0.5,
        sigma: 1.0,
        h: 0.2,
    };

    #[test]
    fn step_weight_branches() {
        assert_eq!(STEP.eval(&[-1.0, 0.0]), 0.0);
        assert_eq!(STEP.eval(&[0.25, 0.0]), 0.25);
        assert!((STEP.eval(&[0.75, 0.0]) - 0.95).abs() < 1e-15);
        // the jump point belongs to the middle branch
        assert_eq!(STEP.eval(&[0.5, 0.0]), 0.5);
    }

    #[test]
    fn two_threshold_branches() {
        let w = WeightSpec::TwoThreshold {
            r1: -0.2,
            r2: 0.3,
            sigma: 2.0,
            h: 0.5,
        };
        assert_eq!(w.eval_x1(-0.2), 0.0);
        assert!((w.eval_x1(0.3) - 0.25).abs() < 1e-15);
        assert!((w.eval_x1(0.8) - 1.5).abs() < 1e-15);
        assert!(WeightSpec::TwoThreshold { r1: 0.3, r2: 0.3, sigma: 1.0, h: 1.0 }
            .validate()
            .is_err());
    }

    #[test]
    fn g_case_table() {
        assert_eq!(eval_g(0.0, 1.0, 2.0), 1.0);
        assert!((eval_g(0.5, 1.0, 2.0) - 0.75).abs() < 1e-15);
        assert_eq!(eval_g(2.0, 1.0, 2.0), 0.0);
        assert_eq!(eval_g(-3.0, -0.1, 2.0), 0.0);
        assert_eq!(eval_g(-3.0, 2.0, 3.0), 8.0);
        assert_eq!(eval_g(1.0, 2.0, 3.0), 7.0);
    }

    #[test]
    fn densities_at_hand_computed_points() {
        let z0 = GradientMatrix::zeros(2, 2);
        let zh = DensitySpec::zhikov(2.0, 3.0, STEP);
        assert_eq!(zh.eval(&[0.7, 0.0], z0.view()).unwrap(), 0.0);

        let e1 = DensitySpec::example1(2.0, 3.0, WeightSpec::Constant(1.0));
        let minus = GradientMatrix::last_direction_unit(2, 2, -1.0);
        assert_eq!(e1.eval(&[0.1, 0.1], minus.view()).unwrap(), 1.0);
        let plus = GradientMatrix::last_direction_unit(2, 2, 1.0);
        assert_eq!(e1.eval(&[0.1, 0.1], plus.view()).unwrap(), 2.0);

        let e2 = DensitySpec::example2(2.0, 4.0);
        assert_eq!(e2.eval(&[-0.3, 0.2], plus.view()).unwrap(), 2.0);
        assert_eq!(e2.eval(&[-0.3, 0.2], minus.view()).unwrap(), 1.0);
    }

    #[test]
    fn eval_checks_dimensions() {
        let z = GradientMatrix::zeros(1, 3);
        assert!(DensitySpec::PPower { p: 2.0 }.eval(&[0.0, 0.0], z.view()).is_err());
        let bad = DensitySpec::Composite(vec![CompositeTerm {
            weight: WeightSpec::Constant(1.0),
            base: BaseTerm::PositivePart { row: 2, col: 0, exponent: 2.0 },
        }]);
        assert!(bad.eval(&[0.0, 0.0, 0.0], z.view()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let dens = [
            DensitySpec::zhikov(2.0, 2.5, STEP),
            DensitySpec::example1(1.7, 3.0, STEP),
            DensitySpec::example2(2.0, 4.0),
            DensitySpec::Composite(vec![
                CompositeTerm { weight: WeightSpec::Constant(1.0), base: BaseTerm::NormPower(2.0) },
                CompositeTerm {
                    weight: WeightSpec::Holder { coef: 1.0, shift: -2.0, sigma: 1.0 },
                    base: BaseTerm::NegativePart { row: 1, col: 0, exponent: 3.0 },
                },
            ]),
        ];
        let x = [0.6, -0.1];
        let z = GradientMatrix::from_rows(2, 2, vec![0.3, 0.8, -0.4, 0.2]).unwrap();
        for f in &dens {
            let mut g = vec![0.0; 4];
            f.add_grad_z(&x, z.view(), &mut g);
            for k in 0..4 {
                let d = 1e-6;
                let mut zp = z.clone();
                zp.as_mut_slice()[k] += d;
                let mut zm = z.clone();
                zm.as_mut_slice()[k] -= d;
                let fd = (f.value(&x, zp.view()) - f.value(&x, zm.view())) / (2.0 * d);
                assert!((fd - g[k]).abs() < 1e-6, "{} entry {k}: {fd} vs {}", f.name(), g[k]);
            }
        }
    }

    #[test]
    fn min_point_candidates() {
        let e2 = DensitySpec::example2(2.0, 4.0);
        let y = e2.min_point_candidate(&[0.2, 0.0], 0.1).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-15 && y[1] == 0.0);
        let zh = DensitySpec::zhikov(2.0, 3.0, STEP);
        let y = zh.min_point_candidate(&[0.55, 0.1], 0.1).unwrap();
        assert!((y[0] - 0.45).abs() < 1e-15 && y[1] == 0.1);
        let holder = DensitySpec::zhikov(2.0, 3.0, WeightSpec::Holder { coef: 1.0, shift: 0.3, sigma: 0.5 });
        assert_eq!(holder.min_point_candidate(&[0.2, 0.0], 0.2).unwrap(), vec![0.3, 0.0]);
    }
}
