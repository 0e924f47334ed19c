use rayon::prelude::*;

use super::report::{violates, ConditionReport, Witness, IDENTITY_TOL};
use crate::densities::{DensitySpec, ExponentConfig, WeightSpec};
use crate::error::{invalid, Error, Result};
use crate::fields::{dist, Ball, GradientMatrix};
use crate::sampling::{breakpoint_pairs, pairs_in_ball, points_in_ball, z_samples, SamplerConfig};

/// `(K₁, K₂, K₃)` of the two-point growth bound, with the exponents it refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub exponents: ExponentConfig,
}

impl StructureConstants {
    pub fn new(k1: f64, k2: f64, k3: f64, exponents: ExponentConfig) -> Result<Self> {
        exponents.validate()?;
        if !(k1 >= 1.0) || !(k2 >= 0.0) || !(k3 >= 0.0) || !(k1 + k2 + k3).is_finite() {
            return Err(invalid(format!("need K1 ≥ 1, K2 ≥ 0, K3 ≥ 0; got {k1}, {k2}, {k3}")));
        }
        Ok(Self { k1, k2, k3, exponents })
    }

    /// Constants inherited by `|z|^p + a(x)|z|^q` from `a ∈ Z^σ(c₅, c₆)`.
    pub fn from_zsigma(c: &ZsigmaConstants, exponents: ExponentConfig) -> Result<Self> {
        Self::new(c.c6, c.c5, 0.0, exponents)
    }

    pub fn sigma(&self) -> f64 {
        self.exponents.sigma
    }
}

/// `a(x) ≤ c₆ a(x̃) + c₅ |x − x̃|^σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsigmaConstants {
    pub c5: f64,
    pub c6: f64,
    pub sigma: f64,
}

impl ZsigmaConstants {
    pub fn new(c5: f64, c6: f64, sigma: f64) -> Result<Self> {
        if !(c5 >= 0.0) || !(c6 >= 1.0) || !(sigma > 0.0) || !(c5 + c6 + sigma).is_finite() {
            return Err(invalid(format!("need c5 ≥ 0, c6 ≥ 1, σ > 0; got {c5}, {c6}, {sigma}")));
        }
        Ok(Self { c5, c6, sigma })
    }

    /// `c₅ = c₆ = 2^σ [1 + h/(r₂ − r₁)^σ]` for the two-threshold weight.
    pub fn two_threshold(r1: f64, r2: f64, sigma: f64, h: f64) -> Result<Self> {
        let c = 2f64.powf(sigma) * (1.0 + h / (r2 - r1).powf(sigma));
        Self::new(c, c, sigma)
    }

    /// `c₅ = c₆ = (1 + h/r^σ) 2^σ` for the step weight with jump at `r`.
    pub fn step_holder(r: f64, sigma: f64, h: f64) -> Result<Self> {
        let c = (1.0 + h / r.powf(sigma)) * 2f64.powf(sigma);
        Self::new(c, c, sigma)
    }

    /// Both constants multiplied by `factor` (bypasses `c₆ ≥ 1`).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            c5: self.c5 * factor,
            c6: self.c6 * factor,
            sigma: self.sigma,
        }
    }

    /// Closed-form constants for the step and two-threshold weights.
    pub fn for_weight(w: &WeightSpec) -> Option<Self> {
        match *w {
            WeightSpec::StepHolder { r, sigma, h } => Self::step_holder(r, sigma, h).ok(),
            WeightSpec::TwoThreshold { r1, r2, sigma, h } => Self::two_threshold(r1, r2, sigma, h).ok(),
            _ => None,
        }
    }
}

/// `q ≤ p (1 + σ/n)`.
pub fn check_f1(cfg: &ExponentConfig) -> bool {
    cfg.q <= cfg.p * (1.0 + cfg.sigma / cfg.n as f64)
}

/// `σ − n(q − p)/p`; nonnegative exactly when [`check_f1`] holds.
pub fn f1_margin(cfg: &ExponentConfig) -> f64 {
    cfg.sigma - cfg.n as f64 * (cfg.q - cfg.p) / cfg.p
}

fn breakpoints(f: &DensitySpec) -> Vec<f64> {
    let mut b = f.jumps();
    match f {
        DensitySpec::Zhikov { weight, .. } | DensitySpec::Example1 { weight, .. } => b.extend(weight.kinks()),
        DensitySpec::Example2 { .. } => b.push(0.0),
        DensitySpec::Composite(terms) => {
            for t in terms {
                b.extend(t.weight.kinks());
            }
        }
        DensitySpec::PPower { .. } => {}
    }
    b
}

/// Evaluates both sides of the two-point growth bound at one triple and
/// returns a witness if either side fails.
pub fn f2_sides(f: &DensitySpec, c: &StructureConstants, x: &[f64], xt: &[f64], z: &GradientMatrix) -> (f64, f64, f64) {
    let zn = z.norm();
    let fx = f.value(x, z.view());
    let lower = zn.powf(c.exponents.p);
    let upper = c.k1 * f.value(xt, z.view())
        + c.k2 * dist(x, xt).powf(c.sigma()) * zn.powf(c.exponents.q)
        + c.k3;
    (lower, fx, upper)
}

/// Samples `|z|^p ≤ f(x,z) ≤ K₁ f(x̃,z) + K₂|x−x̃|^σ|z|^q + K₃` over triples
/// `(x, x̃, z)` with `x, x̃ ∈ domain`.
///
/// Pairs come from a lattice plus pairs straddling and linking every jump and
/// kink of the density's weights; each pair is combined with the same set of
/// `z` samples. The first violation in sample order is reported.
pub fn check_f2_sampled(f: &DensitySpec, c: &StructureConstants, domain: &Ball, sampler: &SamplerConfig) -> ConditionReport {
    let n = domain.dim();
    let rows = c.exponents.target_dim;
    let z_count = sampler.budget.clamp(1, 64);
    let pair_count = (sampler.budget / z_count).max(1);
    let zs = z_samples(rows, n, z_count, sampler.z_min, sampler.z_max, sampler.seed);
    let mut pairs = pairs_in_ball(domain, pair_count, sampler.seed);
    pairs.extend(breakpoint_pairs(domain, &breakpoints(f)));

    let witness = pairs.par_iter().find_map_first(|(x, xt)| {
        zs.iter().find_map(|z| {
            let (lower, fx, upper) = f2_sides(f, c, x, xt, z);
            if violates(lower, fx, IDENTITY_TOL) {
                Some(Witness {
                    inequality: "|z|^p <= f(x,z)".into(),
                    x: x.clone(),
                    x_tilde: None,
                    z: Some(z.clone()),
                    z_alt: None,
                    lhs: lower,
                    rhs: fx,
                })
            } else if violates(fx, upper, IDENTITY_TOL) {
                Some(Witness {
                    inequality: "f(x,z) <= K1 f(x~,z) + K2 |x-x~|^sigma |z|^q + K3".into(),
                    x: x.clone(),
                    x_tilde: Some(xt.clone()),
                    z: Some(z.clone()),
                    z_alt: None,
                    lhs: fx,
                    rhs: upper,
                })
            } else {
                None
            }
        })
    });
    ConditionReport::new("f2", pairs.len() * zs.len(), sampler.seed, witness)
        .detail("density", f.name())
        .detail("k1", c.k1)
        .detail("k2", c.k2)
        .detail("k3", c.k3)
        .detail("sigma", c.sigma())
}

/// Midpoint convexity of `z ↦ f(x, z)` on sampled pairs: consecutive random
/// samples, each sample against `0`, and each sample against its negative.
pub fn check_convexity_sampled(f: &DensitySpec, x: &[f64], rows: usize, sampler: &SamplerConfig) -> ConditionReport {
    let cols = x.len();
    let count = sampler.budget.max(2);
    let zs = z_samples(rows, cols, count, sampler.z_min, sampler.z_max, sampler.seed);
    let zero = GradientMatrix::zeros(rows, cols);
    let mut pairs: Vec<(&GradientMatrix, GradientMatrix)> = Vec::with_capacity(3 * count);
    for w in zs.chunks(2) {
        if let [a, b] = w {
            pairs.push((a, b.clone()));
        }
    }
    for z in &zs {
        pairs.push((z, zero.clone()));
        pairs.push((z, z.scaled(-1.0)));
    }
    let witness = pairs.par_iter().find_map_first(|(a, b)| {
        let mid = f.value(x, a.midpoint(b).view());
        let avg = 0.5 * (f.value(x, a.view()) + f.value(x, b.view()));
        violates(mid, avg, IDENTITY_TOL).then(|| Witness {
            inequality: "f(x,(z1+z2)/2) <= (f(x,z1)+f(x,z2))/2".into(),
            x: x.to_vec(),
            x_tilde: None,
            z: Some((*a).clone()),
            z_alt: Some(b.clone()),
            lhs: mid,
            rhs: avg,
        })
    });
    ConditionReport::new("f3", pairs.len(), sampler.seed, witness).detail("density", f.name())
}

/// A sampled minimum point for `y ↦ f(y, ·)` on `B̄(x, ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinPointCertificate {
    pub y_star: Vec<f64>,
    pub report: ConditionReport,
}

impl MinPointCertificate {
    pub fn certified(&self) -> bool {
        self.report.passed()
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Candidate points for the minimisation in `B̄(x, ε)`: the centre, the `2n`
/// axis extremes, the density's structural candidate and `y_budget` lattice
/// points of the open ball.
pub fn min_point_candidates(f: &DensitySpec, x: &[f64], eps: f64, y_budget: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let ball = Ball::new(x.to_vec(), eps)?;
    let mut ys = vec![x.to_vec()];
    for axis in 0..x.len() {
        for s in [-1.0, 1.0] {
            let mut y = x.to_vec();
            y[axis] += s * eps;
            ys.push(y);
        }
    }
    if let Some(y) = f.min_point_candidate(x, eps) {
        ys.push(y);
    }
    ys.extend(points_in_ball(&ball, y_budget, seed));
    Ok(ys)
}

/// Picks `y*` among sampled points of `B̄(x, ε)` and checks
/// `f(y*, z) ≤ f(y, z)` for every sampled `(y, z)`.
///
/// The selection minimises the surrogate `Σ_z f(y, z)` over the sampled `z`;
/// for product densities this is the minimiser of the weight, for
/// [`DensitySpec::Example2`] it is `(x₁ + ε, x₂, …)`. Ties go to the
/// lexicographically smallest point.
pub fn find_min_point_f4(
    f: &DensitySpec,
    x: &[f64],
    eps: f64,
    domain: &Ball,
    rows: usize,
    sampler: &SamplerConfig,
) -> Result<MinPointCertificate> {
    let y_budget = sampler.budget.clamp(1, 256);
    let z_budget = (sampler.budget / y_budget).clamp(1, 256);
    let zs = z_samples(rows, x.len(), z_budget, sampler.z_min, sampler.z_max, sampler.seed);
    find_min_point_with(f, x, eps, domain, &zs, y_budget, sampler.seed)
}

pub(crate) fn find_min_point_with(
    f: &DensitySpec,
    x: &[f64],
    eps: f64,
    domain: &Ball,
    zs: &[GradientMatrix],
    y_budget: usize,
    seed: u64,
) -> Result<MinPointCertificate> {
    if !(eps > 0.0) {
        return Err(invalid(format!("ε must be positive, got {eps}")));
    }
    if x.len() != domain.dim() {
        return Err(crate::error::mismatch("x and the domain have different dimensions"));
    }
    let ball = Ball::new(x.to_vec(), eps)?;
    if !ball.is_inside(domain) {
        return Err(Error::OutOfDomain(format!(
            "closed ball B({x:?}, {eps}) leaves the domain"
        )));
    }
    let ys = min_point_candidates(f, x, eps, y_budget, seed)?;
    let surrogate: Vec<f64> = ys
        .par_iter()
        .map(|y| zs.iter().map(|z| f.value(y, z.view())).sum())
        .collect();
    let mut best = 0;
    for k in 1..ys.len() {
        if surrogate[k] < surrogate[best] || (surrogate[k] == surrogate[best] && lex_less(&ys[k], &ys[best])) {
            best = k;
        }
    }
    let y_star = ys[best].clone();
    let witness = zs.par_iter().find_map_first(|z| {
        let at_star = f.value(&y_star, z.view());
        ys.iter().find_map(|y| {
            let fy = f.value(y, z.view());
            violates(at_star, fy, IDENTITY_TOL).then(|| Witness {
                inequality: "f(y*,z) <= f(y,z)".into(),
                x: y_star.clone(),
                x_tilde: Some(y.clone()),
                z: Some(z.clone()),
                z_alt: None,
                lhs: at_star,
                rhs: fy,
            })
        })
    });
    let report = ConditionReport::new("f4", ys.len() * zs.len(), seed, witness)
        .detail("density", f.name())
        .detail("x", super::report::join(x))
        .detail("eps", eps)
        .detail("y_star", super::report::join(&y_star));
    Ok(MinPointCertificate { y_star, report })
}

/// Samples `a(x) ≤ c₆ a(x̃) + c₅ |x − x̃|^σ` over lattice pairs of `domain`
/// plus pairs built from the weight's jumps and kinks.
pub fn check_zsigma(w: &WeightSpec, c: &ZsigmaConstants, domain: &Ball, sampler: &SamplerConfig) -> ConditionReport {
    let mut pairs = pairs_in_ball(domain, sampler.budget.max(1), sampler.seed);
    let mut bps = w.jumps();
    bps.extend(w.kinks());
    pairs.extend(breakpoint_pairs(domain, &bps));
    let mut worst = 0.0f64;
    let witness = pairs.par_iter().find_map_first(|(x, xt)| {
        let (lhs, rhs) = zsigma_sides(w, c, x, xt);
        violates(lhs, rhs, IDENTITY_TOL).then(|| Witness {
            inequality: "a(x) <= c6 a(x~) + c5 |x-x~|^sigma".into(),
            x: x.clone(),
            x_tilde: Some(xt.clone()),
            z: None,
            z_alt: None,
            lhs,
            rhs,
        })
    });
    for (x, xt) in &pairs {
        let (lhs, rhs) = zsigma_sides(w, c, x, xt);
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    ConditionReport::new("zsigma", pairs.len(), sampler.seed, witness)
        .detail("c5", c.c5)
        .detail("c6", c.c6)
        .detail("sigma", c.sigma)
        .detail("max_ratio", worst)
}

pub fn zsigma_sides(w: &WeightSpec, c: &ZsigmaConstants, x: &[f64], xt: &[f64]) -> (f64, f64) {
    (w.eval(x), c.c6 * w.eval(xt) + c.c5 * dist(x, xt).powf(c.sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{BaseTerm, CompositeTerm};

    fn cfg(p: f64, q: f64, sigma: f64) -> ExponentConfig {
        ExponentConfig::new(p, q, 2, 2, sigma).unwrap()
    }

    #[test]
    fn f1_arithmetic() {
        assert!(check_f1(&cfg(2.0, 2.5, 1.0)));
        assert!(!check_f1(&cfg(2.0, 4.0, 1.0)));
        let eq = cfg(2.0, 4.0, 2.0);
        assert!(check_f1(&eq));
        assert_eq!(f1_margin(&eq), 0.0);
    }

    #[test]
    fn zsigma_constants_from_weights() {
        let c = ZsigmaConstants::step_holder(0.5, 1.0, 0.2).unwrap();
        assert!((c.c5 - 2.8).abs() < 1e-15 && c.c5 == c.c6);
        let t = ZsigmaConstants::two_threshold(0.0, 0.5, 1.0, 0.2).unwrap();
        assert_eq!(t, c);
        assert!(ZsigmaConstants::new(0.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn zsigma_step_weight_closed_form_passes_and_unit_fails() {
        let w = WeightSpec::StepHolder { r: 0.5, sigma: 1.0, h: 0.2 };
        let dom = Ball::centered(2, 1.0).unwrap();
        let s = SamplerConfig::new(20_000, 5);
        let good = check_zsigma(&w, &ZsigmaConstants::step_holder(0.5, 1.0, 0.2).unwrap(), &dom, &s);
        assert!(good.passed(), "{}", good.to_text());
        let bad = check_zsigma(&w, &ZsigmaConstants::new(1.0, 1.0, 1.0).unwrap(), &dom, &s);
        let wit = bad.witness.as_ref().expect("witness");
        assert!(wit.x[0] > 0.5 && wit.x_tilde.as_ref().unwrap()[0] <= 0.5, "{}", bad.to_text());
    }

    #[test]
    fn f2_passes_with_inherited_constants() {
        let w = WeightSpec::StepHolder { r: 0.5, sigma: 1.0, h: 0.2 };
        let zc = ZsigmaConstants::step_holder(0.5, 1.0, 0.2).unwrap();
        let c = StructureConstants::from_zsigma(&zc, cfg(2.0, 2.5, 1.0)).unwrap();
        let dom = Ball::centered(2, 1.0).unwrap();
        let s = SamplerConfig::new(20_000, 9);
        for f in [DensitySpec::zhikov(2.0, 2.5, w.clone()), DensitySpec::example1(2.0, 2.5, w.clone())] {
            let r = check_f2_sampled(&f, &c, &dom, &s);
            assert!(r.passed(), "{}", r.to_text());
        }
    }

    #[test]
    fn f2_example2_with_unit_constants() {
        let c = StructureConstants::new(1.0, 0.0, 1.0, cfg(2.0, 4.0, 2.0)).unwrap();
        let r = check_f2_sampled(&DensitySpec::example2(2.0, 4.0), &c, &Ball::centered(2, 1.0).unwrap(), &SamplerConfig::new(20_000, 1));
        assert!(r.passed(), "{}", r.to_text());
    }

    #[test]
    fn f2_fails_across_the_jump_with_small_constants() {
        let w = WeightSpec::StepHolder { r: 0.5, sigma: 1.0, h: 0.2 };
        let c = StructureConstants::new(1.0, 1.0, 0.0, cfg(2.0, 2.5, 1.0)).unwrap();
        let f = DensitySpec::zhikov(2.0, 2.5, w);
        let r = check_f2_sampled(&f, &c, &Ball::centered(2, 1.0).unwrap(), &SamplerConfig::new(10_000, 2));
        let wit = r.witness.as_ref().expect("must fail");
        let (_, fx, upper) = f2_sides(&f, &c, &wit.x, wit.x_tilde.as_ref().unwrap(), wit.z.as_ref().unwrap());
        assert_eq!((fx, upper), (wit.lhs, wit.rhs));
        assert!(fx - upper > 1e-12);
    }

    #[test]
    fn convexity_checks() {
        let s = SamplerConfig::new(2000, 4);
        let x = [0.3, -0.2];
        assert!(check_convexity_sampled(&DensitySpec::PPower { p: 2.0 }, &x, 2, &s).passed());
        for x1 in [-0.5, 0.0, 0.3, 0.9] {
            let r = check_convexity_sampled(&DensitySpec::example2(2.0, 4.0), &[x1, 0.1], 2, &s);
            assert!(r.passed(), "{}", r.to_text());
        }
        let concave = DensitySpec::Composite(vec![CompositeTerm {
            weight: WeightSpec::Constant(1.0),
            base: BaseTerm::NormPower(0.5),
        }]);
        let r = check_convexity_sampled(&concave, &x, 2, &s);
        let w = r.witness.expect("concave control must fail");
        assert!(w.lhs > w.rhs);
    }

    #[test]
    fn min_point_for_example2_is_right_shift() {
        let cert = find_min_point_f4(
            &DensitySpec::example2(2.0, 4.0),
            &[0.2, 0.0],
            0.1,
            &Ball::centered(2, 1.0).unwrap(),
            2,
            &SamplerConfig::new(4096, 3),
        )
        .unwrap();
        assert!(cert.certified(), "{}", cert.report.to_text());
        assert!((cert.y_star[0] - 0.3).abs() < 1e-15 && cert.y_star[1] == 0.0, "{:?}", cert.y_star);
    }

    #[test]
    fn min_point_for_product_density_minimises_weight() {
        let w = WeightSpec::TwoThreshold { r1: -0.2, r2: 0.3, sigma: 1.0, h: 0.4 };
        let f = DensitySpec::zhikov(2.0, 3.0, w.clone());
        let dom = Ball::centered(2, 1.0).unwrap();
        let cert = find_min_point_f4(&f, &[0.35, 0.1], 0.2, &dom, 2, &SamplerConfig::new(4096, 3)).unwrap();
        assert!(cert.certified());
        assert!((cert.y_star[0] - 0.15).abs() < 1e-12);
        let ys = min_point_candidates(&f, &[0.35, 0.1], 0.2, 200, 3).unwrap();
        assert!(ys.iter().all(|y| w.eval(&cert.y_star) <= w.eval(y)));
    }

    #[test]
    fn z_dependent_minimiser_fails() {
        // |z|^2 + (x1+2)(z11)_+^2 + (2-x1)(z11)_-^2: the best y moves with the sign of z11
        let f = DensitySpec::Composite(vec![
            CompositeTerm { weight: WeightSpec::Constant(1.0), base: BaseTerm::NormPower(2.0) },
            CompositeTerm {
                weight: WeightSpec::Holder { coef: 1.0, shift: -2.0, sigma: 1.0 },
                base: BaseTerm::PositivePart { row: 0, col: 0, exponent: 2.0 },
            },
            CompositeTerm {
                weight: WeightSpec::Holder { coef: 1.0, shift: 2.0, sigma: 1.0 },
                base: BaseTerm::NegativePart { row: 0, col: 0, exponent: 2.0 },
            },
        ]);
        let cert = find_min_point_f4(&f, &[0.0, 0.0], 0.3, &Ball::centered(2, 1.0).unwrap(), 2, &SamplerConfig::new(4096, 8)).unwrap();
        let w = cert.report.witness.as_ref().expect("must fail");
        assert!(w.lhs > w.rhs);
        assert_eq!(f.value(&w.x, w.z.as_ref().unwrap().view()), w.lhs);
    }

    #[test]
    fn min_point_refuses_ball_leaving_domain() {
        let r = find_min_point_f4(
            &DensitySpec::example2(2.0, 4.0),
            &[0.95, 0.0],
            0.1,
            &Ball::centered(2, 1.0).unwrap(),
            2,
            &SamplerConfig::new(64, 3),
        );
        assert!(matches!(r, Err(Error::OutOfDomain(_))));
    }
}
