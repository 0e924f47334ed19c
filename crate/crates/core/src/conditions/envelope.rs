use rayon::prelude::*;

use super::report::{violates, ConditionReport, Witness, IDENTITY_TOL};
use super::structure::{find_min_point_f4, StructureConstants};
use crate::densities::DensitySpec;
use crate::error::{invalid, Error, Result};
use crate::fields::{Ball, GradientMatrix};
use crate::sampling::{points_in_ball, z_samples, SamplerConfig};

/// Certified bounds `lower ≤ h(z) ≤ upper` on one value of the local
/// infimum `f⁻_{x,ε}` or of its convex envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeBracket {
    pub lower: f64,
    pub upper: f64,
    /// `false` when `lower` is the trivial bound `0`.
    pub certified: bool,
}

impl EnvelopeBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        self.lower <= v + tol && v <= self.upper + tol
    }
}

/// Everything needed to bracket `f⁻_{x,ε}(z)` for many `z` at a fixed `(x, ε)`:
/// the sampled minimum point and the interior `y` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalInfimum {
    pub x: Vec<f64>,
    pub eps: f64,
    pub y_star: Vec<f64>,
    pub certified: bool,
    pub ys: Vec<Vec<f64>>,
}

impl LocalInfimum {
    /// Runs [`find_min_point_f4`] and draws `sampler.budget` points of the
    /// open ball `B(x, ε)` (capped at 4096) for the upper bound.
    pub fn new(f: &DensitySpec, x: &[f64], eps: f64, domain: &Ball, rows: usize, sampler: &SamplerConfig) -> Result<Self> {
        let cert = find_min_point_f4(f, x, eps, domain, rows, sampler)?;
        let ball = Ball::new(x.to_vec(), eps)?;
        let mut ys = vec![x.to_vec()];
        ys.extend(points_in_ball(&ball, sampler.budget.clamp(1, 4096), sampler.seed ^ 0x5eed));
        Ok(Self {
            x: x.to_vec(),
            eps,
            certified: cert.certified(),
            y_star: cert.y_star,
            ys,
        })
    }

    /// `upper` is the smallest sampled `f(y, z)` over interior points; `lower`
    /// is `f(y*, z)` when `y*` is certified, else `0`.
    pub fn essinf_bracket(&self, f: &DensitySpec, z: &GradientMatrix) -> EnvelopeBracket {
        let upper = self
            .ys
            .iter()
            .map(|y| f.value(y, z.view()))
            .fold(f64::INFINITY, f64::min);
        let at_star = f.value(&self.y_star, z.view());
        if self.certified && at_star <= upper {
            EnvelopeBracket {
                lower: at_star,
                upper,
                certified: true,
            }
        } else {
            EnvelopeBracket {
                lower: 0.0,
                upper,
                certified: false,
            }
        }
    }

    /// Bounds on `(f⁻_{x,ε})**(z)`. Since `z ↦ f(y*, z)` is convex and lies
    /// below `f⁻_{x,ε}`, it also lies below the envelope, and the envelope lies
    /// below `f⁻_{x,ε}`; the numbers coincide with [`Self::essinf_bracket`].
    pub fn biconjugate_bracket(&self, f: &DensitySpec, z: &GradientMatrix) -> EnvelopeBracket {
        self.essinf_bracket(f, z)
    }
}

/// Bracket on the essential infimum of `y ↦ f(y, z)` over `B(x, ε)`.
pub fn essinf_bracket(
    f: &DensitySpec,
    x: &[f64],
    eps: f64,
    z: &GradientMatrix,
    domain: &Ball,
    sampler: &SamplerConfig,
) -> Result<EnvelopeBracket> {
    Ok(LocalInfimum::new(f, x, eps, domain, z.rows(), sampler)?.essinf_bracket(f, z))
}

/// Bracket on the convex envelope of `f⁻_{x,ε}` at `z`.
pub fn biconjugate_bracket(
    f: &DensitySpec,
    x: &[f64],
    eps: f64,
    z: &GradientMatrix,
    domain: &Ball,
    sampler: &SamplerConfig,
) -> Result<EnvelopeBracket> {
    Ok(LocalInfimum::new(f, x, eps, domain, z.rows(), sampler)?.biconjugate_bracket(f, z))
}

/// Lower convex hull of a 1D point set, as the list of its vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull1d {
    vertices: Vec<(f64, f64)>,
}

impl ConvexHull1d {
    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Value of the hull at `s`, or `None` outside the abscissa range.
    pub fn eval(&self, s: f64) -> Option<f64> {
        let v = &self.vertices;
        let (first, last) = (v[0].0, v[v.len() - 1].0);
        if !(s >= first && s <= last) {
            return None;
        }
        let k = v.partition_point(|p| p.0 < s);
        if k == 0 {
            return Some(v[0].1);
        }
        let (s0, v0) = v[k - 1];
        let (s1, v1) = v[k];
        if s == s1 {
            return Some(v1);
        }
        let t = (s - s0) / (s1 - s0);
        Some(v0 + t * (v1 - v0))
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Lower convex hull (monotone chain) of points `(s, v)`.
pub fn convex_hull_1d(points: &[(f64, f64)]) -> Result<ConvexHull1d> {
    if points.len() < 2 {
        return Err(invalid(format!("convex hull needs at least 2 points, got {}", points.len())));
    }
    if points.iter().any(|(s, v)| !s.is_finite() || !v.is_finite()) {
        return Err(invalid("convex hull points must be finite"));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(invalid("convex hull abscissae must be distinct"));
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    Ok(ConvexHull1d { vertices: hull })
}

/// Parameters of the implication
/// `|z|^α + (f⁻_{x,ε})**(z) ≤ L ε^{-n}  ⇒  f(x, z) ≤ A [(f⁻_{x,ε})**(z) + b + |z|^p]`
/// with `θ ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HPropertyParams {
    pub alpha: f64,
    pub l: f64,
    pub a: f64,
    pub b: f64,
    pub eps_star: f64,
}

impl HPropertyParams {
    pub fn new(alpha: f64, l: f64, a: f64, b: f64, eps_star: f64) -> Result<Self> {
        if !(alpha >= 1.0) || !(l > 0.0) || !(a > 0.0) || !(b >= 0.0) || !(eps_star > 0.0 && eps_star < 1.0) {
            return Err(invalid(format!(
                "need α ≥ 1, L > 0, A > 0, b ≥ 0, 0 < ε* < 1; got {alpha}, {l}, {a}, {b}, {eps_star}"
            )));
        }
        Ok(Self { alpha, l, a, b, eps_star })
    }

    /// `α = p`, `A = K₁ + K₂ L^{(q−p)/p}`, `b = K₃`.
    pub fn from_constants(c: &StructureConstants, l: f64, eps_star: f64) -> Result<Self> {
        let (p, q) = (c.exponents.p, c.exponents.q);
        Self::new(p, l, c.k1 + c.k2 * l.powf((q - p) / p), c.k3, eps_star)
    }
}

/// Default `ε*`.
pub const DEFAULT_EPS_STAR: f64 = 0.5;

/// Checks the implication of [`HPropertyParams`] at `(x, ε)` over sampled `z`.
///
/// The premise is tested with the upper bracket (so it holds whenever it is
/// accepted) and the conclusion with the lower bracket (so a pass is sound up
/// to the sampled certificate of `y*`). At every accepted `z` the
/// intermediate estimate `ε^σ |z|^q ≤ L^{(q−p)/p} |z|^p` is also checked, to
/// relative precision `1e-9`. `|z|` is sampled up to `1.2 (L ε^{-n})^{1/p}`.
pub fn check_h_property(
    f: &DensitySpec,
    params: &HPropertyParams,
    c: &StructureConstants,
    x: &[f64],
    eps: f64,
    domain: &Ball,
    sampler: &SamplerConfig,
) -> Result<ConditionReport> {
    let (p, q, sigma) = (c.exponents.p, c.exponents.q, c.sigma());
    let n = x.len() as f64;
    if !(eps > 0.0 && eps < params.eps_star) {
        return Err(Error::Precondition(format!("ε = {eps} must lie in (0, ε* = {})", params.eps_star)));
    }
    if params.alpha != p {
        return Err(invalid(format!("α = {} must equal p = {p}", params.alpha)));
    }
    let rows = c.exponents.target_dim;
    let local = LocalInfimum::new(f, x, eps, domain, rows, &SamplerConfig { budget: 1024, ..*sampler })?;
    let level = params.l * eps.powf(-n);
    let z_max = 1.2 * level.powf(1.0 / p);
    let zs = z_samples(rows, x.len(), sampler.budget.max(1), (z_max * 1e-4).min(sampler.z_min), z_max, sampler.seed);
    let mid_factor = params.l.powf((q - p) / p);

    let outcomes: Vec<(bool, Option<Witness>)> = zs
        .par_iter()
        .map(|z| {
            let br = local.biconjugate_bracket(f, z);
            let zn = z.norm();
            if zn.powf(params.alpha) + br.upper > level {
                return (false, None);
            }
            let lhs = eps.powf(sigma) * zn.powf(q);
            let rhs = mid_factor * zn.powf(p);
            if lhs > rhs * (1.0 + 1e-9) {
                return (
                    true,
                    Some(Witness {
                        inequality: "eps^sigma |z|^q <= L^((q-p)/p) |z|^p".into(),
                        x: x.to_vec(),
                        x_tilde: None,
                        z: Some(z.clone()),
                        z_alt: None,
                        lhs,
                        rhs,
                    }),
                );
            }
            let fx = f.value(x, z.view());
            let bound = params.a * (br.lower + params.b + zn.powf(p));
            let w = violates(fx, bound, IDENTITY_TOL).then(|| Witness {
                inequality: "f(x,z) <= A (lower + b + |z|^p)".into(),
                x: x.to_vec(),
                x_tilde: Some(local.y_star.clone()),
                z: Some(z.clone()),
                z_alt: None,
                lhs: fx,
                rhs: bound,
            });
            (true, w)
        })
        .collect();
    let premise = outcomes.iter().filter(|o| o.0).count();
    let witness = outcomes.into_iter().find_map(|o| o.1);
    Ok(ConditionReport::new("hprop", zs.len(), sampler.seed, witness)
        .detail("density", f.name())
        .detail("x", super::report::join(x))
        .detail("eps", eps)
        .detail("A", params.a)
        .detail("L", params.l)
        .detail("b", params.b)
        .detail("premise_samples", premise)
        .detail("y_star", super::report::join(&local.y_star))
        .detail("lower_bound", if local.certified { "certified" } else { "trivial" }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{ExponentConfig, WeightSpec};
    use crate::conditions::ZsigmaConstants;

    fn brute_force_hull(pts: &[(f64, f64)], s: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                let slope = (b.1 - a.1) / (b.0 - a.0);
                let line = |t: f64| a.1 + slope * (t - a.0);
                if pts.iter().all(|p| line(p.0) <= p.1 + 1e-12) {
                    best = best.max(line(s));
                }
            }
        }
        best
    }

    #[test]
    fn hull_examples() {
        let h = convex_hull_1d(&[(-1.0, 1.0), (0.0, 2.0), (1.0, 1.0)]).unwrap();
        assert_eq!(h.vertices(), &[(-1.0, 1.0), (1.0, 1.0)]);
        assert_eq!(h.eval(0.0), Some(1.0));
        let par: Vec<_> = (-5..=5).map(|i| (i as f64 / 5.0, (i as f64 / 5.0).powi(2))).collect();
        assert_eq!(convex_hull_1d(&par).unwrap().vertices().len(), par.len());
        assert!(convex_hull_1d(&[(0.0, 1.0)]).is_err());
        assert!(convex_hull_1d(&[(0.0, 1.0), (0.0, 2.0)]).is_err());
    }

    #[test]
    fn hull_of_double_well_matches_support_lines() {
        let pts: Vec<_> = (0..=40)
            .map(|i| {
                let s = -1.0 + 4.0 * i as f64 / 40.0;
                (s, (s * s).min((s - 2.0).powi(2) + 0.5))
            })
            .collect();
        let h = convex_hull_1d(&pts).unwrap();
        for &(s, _) in &pts {
            assert!((h.eval(s).unwrap() - brute_force_hull(&pts, s)).abs() < 1e-9);
        }
    }

    fn dom() -> Ball {
        Ball::centered(2, 1.0).unwrap()
    }

    #[test]
    fn bracket_is_tight_for_x_independent_density() {
        let f = DensitySpec::PPower { p: 3.0 };
        let z = GradientMatrix::from_rows(2, 2, vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let b = biconjugate_bracket(&f, &[0.1, 0.2], 0.2, &z, &dom(), &SamplerConfig::new(512, 1)).unwrap();
        let exact = f.value(&[0.0, 0.0], z.view());
        assert!(b.certified && b.width().abs() <= 1e-9 && (b.lower - exact).abs() < 1e-12);
    }

    #[test]
    fn bracket_contains_p_power_across_phase_boundary() {
        let f = DensitySpec::zhikov(2.0, 3.0, WeightSpec::StepHolder { r: 0.5, sigma: 1.0, h: 0.2 });
        let z = GradientMatrix::from_rows(2, 2, vec![1.0, 2.0, 0.0, -1.0]).unwrap();
        let b = essinf_bracket(&f, &[0.05, 0.0], 0.2, &z, &dom(), &SamplerConfig::new(512, 1)).unwrap();
        assert!(b.contains(z.norm().powi(2), 1e-12) && b.lower <= b.upper);
        assert!((b.lower - 6.0).abs() < 1e-12);
    }

    #[test]
    fn example1_negative_direction_has_exact_bracket() {
        let f = DensitySpec::example1(2.0, 2.5, WeightSpec::StepHolder { r: 0.5, sigma: 1.0, h: 0.2 });
        let z = GradientMatrix::last_direction_unit(2, 2, -1.5);
        let b = biconjugate_bracket(&f, &[0.5, 0.0], 0.3, &z, &dom(), &SamplerConfig::new(512, 1)).unwrap();
        assert_eq!((b.lower, b.upper), (2.25, 2.25));
    }

    #[test]
    fn example2_lower_bracket_uses_right_shift() {
        let f = DensitySpec::example2(2.0, 4.0);
        let z = GradientMatrix::last_direction_unit(2, 2, 1.0);
        let b = essinf_bracket(&f, &[0.2, 0.0], 0.1, &z, &dom(), &SamplerConfig::new(512, 1)).unwrap();
        assert!(b.certified);
        assert_eq!(b.lower, f.value(&[0.2 + 0.1, 0.0], z.view()));
    }

    fn example1_constants() -> (DensitySpec, StructureConstants) {
        let w = WeightSpec::StepHolder { r: 0.5, sigma: 1.0, h: 0.2 };
        let zc = ZsigmaConstants::step_holder(0.5, 1.0, 0.2).unwrap();
        let c = StructureConstants::from_zsigma(&zc, ExponentConfig::new(2.0, 2.5, 2, 2, 1.0).unwrap()).unwrap();
        (DensitySpec::example1(2.0, 2.5, w), c)
    }

    #[test]
    fn h_property_holds_for_example1() {
        let (f, c) = example1_constants();
        let params = HPropertyParams::from_constants(&c, 10.0, DEFAULT_EPS_STAR).unwrap();
        for (x, eps) in [([0.45, 0.1], 0.1), ([0.0, 0.0], 0.3), ([0.6, -0.2], 0.05)] {
            let r = check_h_property(&f, &params, &c, &x, eps, &dom(), &SamplerConfig::new(2000, 3)).unwrap();
            assert!(r.passed(), "{}", r.to_text());
        }
    }

    #[test]
    fn h_property_preconditions() {
        let (f, c) = example1_constants();
        let params = HPropertyParams::from_constants(&c, 10.0, 0.5).unwrap();
        let s = SamplerConfig::new(10, 1);
        assert!(matches!(check_h_property(&f, &params, &c, &[0.0, 0.0], 0.5, &dom(), &s), Err(Error::Precondition(_))));
        assert!(matches!(check_h_property(&f, &params, &c, &[0.9, 0.0], 0.2, &dom(), &s), Err(Error::OutOfDomain(_))));
        let bad_alpha = HPropertyParams { alpha: 3.0, ..params };
        assert!(check_h_property(&f, &bad_alpha, &c, &[0.0, 0.0], 0.1, &dom(), &s).is_err());
    }

    #[test]
    fn h_property_intermediate_step_fails_without_f1() {
        let w = WeightSpec::StepHolder { r: 0.5, sigma: 1.5, h: 0.2 };
        let zc = ZsigmaConstants::step_holder(0.5, 1.5, 0.2).unwrap();
        let cfg = ExponentConfig::new(2.0, 4.0, 2, 2, 1.5).unwrap();
        let c = StructureConstants::from_zsigma(&zc, cfg).unwrap();
        let params = HPropertyParams::from_constants(&c, 10.0, 0.5).unwrap();
        let r = check_h_property(&DensitySpec::zhikov(2.0, 4.0, w), &params, &c, &[-0.5, 0.0], 0.01, &dom(), &SamplerConfig::new(2000, 3)).unwrap();
        let wit = r.witness.expect("must fail");
        assert!(wit.inequality.starts_with("eps^sigma"));
        assert!(wit.lhs > wit.rhs);
    }
}
