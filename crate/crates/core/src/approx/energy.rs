use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mollifier::{kernel_dual_norm, mollify_gradient_field, MollifierSpec};
use super::testfields::TestField;
use crate::conditions::{find_min_point_f4, StructureConstants};
use crate::densities::DensitySpec;
use crate::error::{invalid, Error, Result};
use crate::fields::{
    discrete_gradient, lp_norm, scalar_truncation_gradient, Ball, GradientField, Grid, SampledField,
};
use crate::sampling::SamplerConfig;

/// `F(u; B) = ∫_B f(x, Du(x)) dx` by the midpoint rule on `u`'s grid.
pub fn energy(f: &DensitySpec, u: &SampledField, ball: &Ball) -> Result<f64> {
    energy_of_gradient(f, &discrete_gradient(u)?, ball)
}

/// Same as [`energy`] for a precomputed gradient field.
pub fn energy_of_gradient(f: &DensitySpec, du: &GradientField, ball: &Ball) -> Result<f64> {
    crate::fields::integrate_over_ball(du.grid(), ball, |node, x| f.value(x, du.at(node)))
}

/// Where the field of a convergence experiment comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSource {
    /// Closed form: a second reference energy is computed on the 2× refined grid.
    Analytic(TestField),
    Samples(SampledField),
}

impl FieldSource {
    fn sample(&self, grid: &Grid) -> Result<SampledField> {
        match self {
            FieldSource::Analytic(t) => t.sample(grid),
            FieldSource::Samples(s) => {
                if s.grid() != grid {
                    return Err(crate::error::mismatch("sampled field lives on a different grid"));
                }
                Ok(s.clone())
            }
        }
    }
}

/// Geometric sequence `ε₀, ε₀ r, ε₀ r², …` of at most `steps` terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsSchedule {
    pub eps0: f64,
    pub ratio: f64,
    pub steps: usize,
}

impl EpsSchedule {
    /// `ε₀ = (R − ρ)/2`, ratio `1/2`, 7 steps.
    pub fn default_for(rho: f64, outer: f64) -> Self {
        Self {
            eps0: 0.5 * (outer - rho),
            ratio: 0.5,
            steps: 7,
        }
    }

    /// The terms that the grid resolves (`ε ≥ 2h`).
    pub fn values(&self, h: f64) -> Vec<f64> {
        (0..self.steps)
            .map(|k| self.eps0 * self.ratio.powi(k as i32))
            .take_while(|&e| e >= 2.0 * h * (1.0 - 1e-12))
            .collect()
    }
}

/// Inputs of [`energy_convergence`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    /// `B = B(x*, ρ)`.
    pub ball: Ball,
    /// `R > ρ` with `B̄(x*, R)` inside the grid.
    pub outer_radius: f64,
    pub schedule: EpsSchedule,
    pub constants: StructureConstants,
    pub energy_tol: f64,
    pub grad_tol: f64,
    /// Nodes at which the pointwise Jensen and domination estimates are checked.
    pub spot_checks: usize,
    pub seed: u64,
}

impl ConvergenceConfig {
    pub fn new(ball: Ball, outer_radius: f64, constants: StructureConstants, seed: u64) -> Self {
        Self {
            schedule: EpsSchedule::default_for(ball.radius(), outer_radius),
            ball,
            outer_radius,
            constants,
            energy_tol: 1e-2,
            grad_tol: 1e-2,
            spot_checks: 100,
            seed,
        }
    }
}

/// One row of a [`ConvergenceTrace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub eps: f64,
    pub energy: f64,
    /// `|F(u_ε; B) − F(u; B)| / F(u; B)` with both on the same grid.
    pub rel_energy_error: f64,
    /// `‖Du_ε − Du‖_{L^p(B)} / ‖Du‖_{L^p(B)}`.
    pub rel_grad_error: f64,
    /// `ε^{n/p} max_B |Du_ε|`, to be compared with `c₁`.
    pub scaled_sup: f64,
    /// `c₃ ∫_B h_ε + K₃ |B|`.
    pub domination_rhs: f64,
    /// Spot nodes where `f(y*, Du_ε(x)) ≤ h_ε(x) + 10⁻⁹` failed.
    pub jensen_failures: usize,
    /// Spot nodes where `f(x, Du_ε(x)) ≤ c₃ f(y*, Du_ε(x)) + K₃` failed.
    pub domination_failures: usize,
    /// Spot nodes whose `y*` was not certified on samples.
    pub uncertified: usize,
}

/// Output of [`energy_convergence`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
    /// `F(u; B)` on the working grid, the target of the trace.
    pub target: f64,
    /// `F(u; B)` on the 2× refined grid, when the field has a closed form.
    pub refined_target: Option<f64>,
    pub p: f64,
    pub c1: f64,
    pub c3: f64,
    pub energy_tol: f64,
    pub grad_tol: f64,
}

impl ConvergenceTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// `‖Du_ε − Du‖` never increased as `ε` decreased.
    pub fn grad_error_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].rel_grad_error <= w[0].rel_grad_error * (1.0 + 1e-12) + 1e-15)
    }

    pub fn domination_holds(&self) -> bool {
        self.rows.iter().all(|r| {
            r.jensen_failures == 0 && r.domination_failures == 0 && r.energy <= r.domination_rhs * (1.0 + 1e-12)
        })
    }

    /// `|F_h(u) − F_{h/2}(u)| / F_{h/2}(u)`: the quadrature part of the error.
    pub fn quadrature_error(&self) -> Option<f64> {
        self.refined_target.map(|r| rel(self.target, r))
    }

    pub fn passed(&self) -> bool {
        match self.last() {
            Some(r) => {
                r.rel_energy_error < self.energy_tol
                    && r.rel_grad_error < self.grad_tol
                    && self.domination_holds()
                    && self.rows.iter().all(|r| r.energy.is_finite())
            }
            None => false,
        }
    }

    pub const CSV_HEADER: &'static str = "eps,energy,rel_energy_error,rel_grad_error,scaled_sup,domination_rhs,jensen_failures,domination_failures,uncertified";

    /// `#` metadata lines, the header, then one row per `ε`.
    pub fn write_csv<W: Write>(&self, mut out: W, metadata: &[(String, String)]) -> std::io::Result<()> {
        for (k, v) in metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "# target: {}", self.target)?;
        if let Some(r) = self.refined_target {
            writeln!(out, "# refined_target: {r}")?;
        }
        writeln!(out, "# p: {}", self.p)?;
        writeln!(out, "# c1: {}", self.c1)?;
        writeln!(out, "# c3: {}", self.c3)?;
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.eps,
                r.energy,
                r.rel_energy_error,
                r.rel_grad_error,
                r.scaled_sup,
                r.domination_rhs,
                r.jensen_failures,
                r.domination_failures,
                r.uncertified
            )?;
        }
        Ok(())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Mollifies `u` along the `ε` sequence and records how `F(u_ε; B)` and
/// `Du_ε` approach `F(u; B)` and `Du`.
///
/// Besides the two errors, every step checks the estimate
/// `F(u_ε; B) ≤ c₃ ∫_B h_ε + K₃ |B|` with `h(y) = f(y, Du(y))`,
/// `c₁ = ‖Du‖_{L^p(B_R)} ‖φ‖_{L^{p'}}` and `c₃ = K₁ + K₂ c₁^{q−p}`, and at
/// `spot_checks` seeded nodes the pointwise chain
/// `f(x, Du_ε) ≤ c₃ f(y*, Du_ε) + K₃` and `f(y*, Du_ε) ≤ h_ε` with `y*`
/// from [`find_min_point_f4`].
///
/// The structure conditions are not re-checked here.
pub fn energy_convergence(
    f: &DensitySpec,
    source: &FieldSource,
    grid: &Grid,
    cfg: &ConvergenceConfig,
) -> Result<ConvergenceTrace> {
    let c = &cfg.constants;
    let (p, q) = (c.exponents.p, c.exponents.q);
    let rho = cfg.ball.radius();
    let big_r = cfg.outer_radius;
    if !(big_r > rho) {
        return Err(invalid(format!("need R > ρ, got R = {big_r}, ρ = {rho}")));
    }
    let outer = cfg.ball.with_radius(big_r)?;
    grid.require_ball(&outer)?;
    let limit = 1f64.min(big_r - rho);
    if !(cfg.schedule.eps0 > 0.0 && cfg.schedule.eps0 < limit) || !(cfg.schedule.ratio > 0.0 && cfg.schedule.ratio < 1.0) {
        return Err(Error::Precondition(format!(
            "ε must lie in (0, 1 ∧ (R − ρ)) = (0, {limit}) and decrease; got ε₀ = {}, ratio = {}",
            cfg.schedule.eps0, cfg.schedule.ratio
        )));
    }
    let epss = cfg.schedule.values(grid.spacing());
    if epss.is_empty() {
        return Err(Error::Precondition(format!(
            "ε₀ = {} is below twice the grid spacing {}",
            cfg.schedule.eps0,
            grid.spacing()
        )));
    }

    let u = source.sample(grid)?;
    let rows = u.target_dim();
    let du = discrete_gradient(&u)?;
    let target = energy_of_gradient(f, &du, &cfg.ball)?;
    let refined_target = match source {
        FieldSource::Analytic(t) => Some(energy(f, &t.sample(&grid.refined(2))?, &cfg.ball)?),
        FieldSource::Samples(_) => None,
    };
    let du_norm_b = lp_norm(&du, p, &cfg.ball)?;
    let du_norm_r = lp_norm(&du, p, &outer)?;
    let n = grid.dim();
    let c1 = du_norm_r * kernel_dual_norm(n, p);
    let c3 = c.k1 + c.k2 * c1.powf(q - p);
    let h_field: Vec<f64> = (0..grid.node_count())
        .into_par_iter()
        .map(|node| f.value(&grid.point(node), du.at(node)))
        .collect();
    let nodes_b = grid.nodes_in_ball(&cfg.ball);
    let vol_b = nodes_b.len() as f64 * grid.cell_volume();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0xc0de);
    let spots: Vec<usize> = (0..cfg.spot_checks.min(nodes_b.len()))
        .map(|_| nodes_b[rng.random_range(0..nodes_b.len())])
        .collect();

    let mut trace_rows = Vec::with_capacity(epss.len());
    for &eps in &epss {
        let kernel = MollifierSpec::new(eps)?.kernel(grid)?;
        let du_eps = mollify_gradient_field(&du, &kernel)?;
        let og = du_eps.grid().clone();
        let energy_eps = energy_of_gradient(f, &du_eps, &cfg.ball)?;
        let (h_eps_out, h_eps) = kernel.convolve(grid, &h_field, 1)?;
        let h_int = crate::fields::integrate_over_ball(&h_eps_out, &cfg.ball, |node, _| h_eps[node])?;

        let diff = crate::fields::integrate_over_ball(&og, &cfg.ball, |node, _| {
            let src = kernel.source_node(grid, &og, node);
            let a = du_eps.at(node);
            let b = du.at(src);
            a.data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
                .powf(p)
        })?
        .powf(1.0 / p);
        let max_b = og
            .nodes_in_ball(&cfg.ball)
            .into_iter()
            .map(|node| du_eps.at(node).norm())
            .fold(0.0, f64::max);

        let spot_out: Vec<usize> = spots
            .iter()
            .map(|&src| {
                let mut idx = vec![0; n];
                grid.multi_index(src, &mut idx);
                idx.iter_mut().for_each(|i| *i -= kernel.margin);
                og.linear_index(&idx)
            })
            .collect();
        let checks: Vec<Result<(bool, bool, bool)>> = spot_out
            .par_iter()
            .map(|&node| {
                let x = og.point(node);
                let cert = find_min_point_f4(f, &x, eps, &outer, rows, &SamplerConfig::new(1024, cfg.seed))?;
                let z = du_eps.at(node);
                let at_star = f.value(&cert.y_star, z);
                let jensen_ok = at_star <= h_eps[node] + 1e-9;
                let fx = f.value(&x, z);
                let dom_rhs = c3 * at_star + c.k3;
                let dom_ok = fx <= dom_rhs + 1e-12 * (1.0 + fx.abs().max(dom_rhs.abs()));
                Ok((jensen_ok, dom_ok, cert.certified()))
            })
            .collect();
        let mut jensen_failures = 0;
        let mut domination_failures = 0;
        let mut uncertified = 0;
        for r in checks {
            let (j, d, cert) = r?;
            jensen_failures += usize::from(!j);
            domination_failures += usize::from(!d);
            uncertified += usize::from(!cert);
        }
        trace_rows.push(TraceRow {
            eps,
            energy: energy_eps,
            rel_energy_error: rel(energy_eps, target),
            rel_grad_error: if du_norm_b > 0.0 { diff / du_norm_b } else { diff },
            scaled_sup: eps.powf(n as f64 / p) * max_b,
            domination_rhs: c3 * h_int + c.k3 * vol_b,
            jensen_failures,
            domination_failures,
            uncertified,
        });
    }
    Ok(ConvergenceTrace {
        rows: trace_rows,
        target,
        refined_target,
        p,
        c1,
        c3,
        energy_tol: cfg.energy_tol,
        grad_tol: cfg.grad_tol,
    })
}

/// The two pieces of the energy of a scalar truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationSplit {
    /// `∫_{B ∩ {|u| ≤ k}} f(x, Du)`.
    pub below: f64,
    /// `∫_{B ∩ {|u| > k}} f(x, 0)`.
    pub above: f64,
    /// `F(u_k; B)` with the weak gradient `1_{|u| ≤ k} Du`.
    pub truncated: f64,
}

impl TruncationSplit {
    /// `|below + above − truncated|`.
    pub fn defect(&self) -> f64 {
        (self.below + self.above - self.truncated).abs()
    }
}

/// Splits the energy of the scalar truncation `max(−k, min(u, k))` over `B`.
pub fn scalar_truncation_energy_split(f: &DensitySpec, u: &SampledField, k: f64, ball: &Ball) -> Result<TruncationSplit> {
    if u.target_dim() != 1 {
        return Err(crate::error::mismatch(format!(
            "scalar truncation needs N = 1, got N = {}",
            u.target_dim()
        )));
    }
    let du = discrete_gradient(u)?;
    let zero = crate::fields::GradientMatrix::zeros(1, u.grid().dim());
    let below = crate::fields::integrate_over_ball(u.grid(), ball, |node, x| {
        if u.value(node)[0].abs() <= k {
            f.value(x, du.at(node))
        } else {
            0.0
        }
    })?;
    let above = crate::fields::integrate_over_ball(u.grid(), ball, |node, x| {
        if u.value(node)[0].abs() > k {
            f.value(x, zero.view())
        } else {
            0.0
        }
    })?;
    let duk = scalar_truncation_gradient(u, &du, k)?;
    let truncated = energy_of_gradient(f, &duk, ball)?;
    Ok(TruncationSplit { below, above, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{ExponentConfig, WeightSpec};
    use crate::fields::{GradientMatrix, unit_ball_volume};

    fn grid() -> Grid {
        Grid::cube(2, -1.0, 1.0, 256).unwrap()
    }

    #[test]
    fn energy_examples() {
        let g = grid();
        let b = Ball::centered(2, 0.8).unwrap();
        let zh = DensitySpec::zhikov(2.0, 3.0, WeightSpec::Zero);
        let c = SampledField::from_fn(g.clone(), 2, |_, o| o.copy_from_slice(&[1.0, 2.0])).unwrap();
        assert_eq!(energy(&zh, &c, &b).unwrap(), 0.0);
        let a = GradientMatrix::from_rows(2, 2, vec![1.0, 2.0, -0.5, 0.25]).unwrap();
        let u = TestField::Affine { a: a.clone(), b: vec![0.0, 1.0] }.sample(&g).unwrap();
        let e = energy(&zh, &u, &b).unwrap();
        let exact = a.norm().powi(2) * unit_ball_volume(2) * 0.64;
        assert!((e - exact).abs() / exact < 0.02);
        // example 2 with z_n^1 = 1/2 < x1 stays on the zero branch of g
        let ex2 = DensitySpec::example2(2.0, 4.0);
        let v = SampledField::from_fn(g, 1, |x, o| o[0] = 0.5 * x[1]).unwrap();
        let right = Ball::new(vec![0.75, 0.0], 0.2).unwrap();
        let e2 = energy(&ex2, &v, &right).unwrap();
        let area = crate::fields::integrate_over_ball(v.grid(), &right, |_, _| 1.0).unwrap();
        assert!((e2 - 0.25 * area).abs() < 1e-12);
    }

    #[test]
    fn split_identity_for_x1() {
        let g = grid();
        let u = SampledField::from_fn(g, 1, |x, o| o[0] = x[0]).unwrap();
        let f = DensitySpec::Composite(vec![
            crate::densities::CompositeTerm {
                weight: WeightSpec::Constant(1.0),
                base: crate::densities::BaseTerm::NormPower(2.0),
            },
            crate::densities::CompositeTerm {
                weight: WeightSpec::Constant(0.3),
                base: crate::densities::BaseTerm::NormPower(0.0),
            },
        ]);
        let b = Ball::centered(2, 0.9).unwrap();
        let s = scalar_truncation_energy_split(&f, &u, 0.5, &b).unwrap();
        assert!(s.defect() < 1e-9);
        let area_outside = crate::fields::integrate_over_ball(u.grid(), &b, |_, x| if x[0].abs() > 0.5 { 1.0 } else { 0.0 }).unwrap();
        assert!((s.above - 0.3 * area_outside).abs() < 1e-12);
        let zh = DensitySpec::zhikov(2.0, 3.0, WeightSpec::StepHolder { r: 0.5, sigma: 1.0, h: 0.2 });
        let s2 = scalar_truncation_energy_split(&zh, &u, 0.5, &b).unwrap();
        assert_eq!(s2.above, 0.0);
        let s3 = scalar_truncation_energy_split(&zh, &u, 2.0, &b).unwrap();
        assert!((s3.below - energy(&zh, &u, &b).unwrap()).abs() < 1e-12 && s3.above == 0.0);
    }

    fn zhikov_setup() -> (DensitySpec, StructureConstants) {
        let w = WeightSpec::StepHolder { r: 0.25, sigma: 1.0, h: 0.2 };
        let zc = crate::conditions::ZsigmaConstants::step_holder(0.25, 1.0, 0.2).unwrap();
        let c = StructureConstants::from_zsigma(&zc, ExponentConfig::new(2.0, 2.5, 2, 2, 1.0).unwrap()).unwrap();
        (DensitySpec::zhikov(2.0, 2.5, w), c)
    }

    #[test]
    fn affine_field_energy_is_unchanged() {
        let (f, c) = zhikov_setup();
        let a = GradientMatrix::from_rows(2, 2, vec![0.5, -1.0, 0.25, 0.75]).unwrap();
        let cfg = ConvergenceConfig::new(Ball::centered(2, 0.5).unwrap(), 0.9, c, 1);
        let t = energy_convergence(&f, &FieldSource::Analytic(TestField::Affine { a, b: vec![0.0, 0.0] }), &grid(), &cfg).unwrap();
        assert!(t.rows.iter().all(|r| r.rel_energy_error < 1e-6 && r.rel_grad_error < 1e-6), "{:?}", t.rows);
        assert!(t.passed());
    }

    #[test]
    fn rejects_large_eps() {
        let (f, c) = zhikov_setup();
        let mut cfg = ConvergenceConfig::new(Ball::centered(2, 0.5).unwrap(), 0.9, c, 1);
        cfg.schedule.eps0 = 0.5;
        let r = energy_convergence(&f, &FieldSource::Analytic(TestField::Saddle), &grid(), &cfg);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
