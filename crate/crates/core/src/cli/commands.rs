use std::fmt::Write as _;
use std::path::Path;

use super::config::ExperimentConfig;
use super::{Condition, Output, WitnessKind};
use crate::approx::{
    energy as field_energy, energy_convergence, gradient_bound_check, lavrentiev_probe, mollify as mollify_field,
    scalar_truncation_energy_split, ConvergenceConfig, FieldSource, MollifierSpec, TestField,
};
use crate::conditions::{
    check_convexity_sampled, check_f1, check_f2_sampled, check_h_property, check_zsigma, f1_margin, find_min_point_f4,
    witness_non_product, witness_non_uhlenbeck, witness_rival_structure_failure, ConditionReport, HPropertyParams,
    Witness, DEFAULT_EPS_STAR,
};
use crate::conditions::join;
use crate::error::{Error, Result};
use crate::fields::{gradient_at, truncation_gradient_identity, write_field_csv, Ball, SampledField};
use crate::sampling::points_in_ball;

type Ran = Result<(bool, String)>;

fn write_report(out: &mut Output, report: &ConditionReport) -> Result<()> {
    let name = &report.condition;
    out.text(&format!("check-{name}.txt"), &report.to_text())?;
    out.text(
        &format!("check-{name}.csv"),
        &format!("{}\n{}\n", ConditionReport::CSV_HEADER, report.to_csv_row()),
    )?;
    if let Some(w) = &report.witness {
        let mut s = String::new();
        let _ = writeln!(s, "inequality: {}", w.inequality);
        let _ = writeln!(s, "x: {}", join(&w.x));
        if let Some(xt) = &w.x_tilde {
            let _ = writeln!(s, "x_tilde: {}", join(xt));
        }
        if let Some(z) = &w.z {
            let _ = writeln!(s, "z: {}", join(z.as_slice()));
        }
        if let Some(z) = &w.z_alt {
            let _ = writeln!(s, "z_alt: {}", join(z.as_slice()));
        }
        let _ = writeln!(s, "lhs: {}", w.lhs);
        let _ = writeln!(s, "rhs: {}", w.rhs);
        let _ = writeln!(s, "excess: {}", w.lhs - w.rhs);
        out.text(&format!("witness-{name}.txt"), &s)?;
    }
    Ok(())
}

fn summarize(report: &ConditionReport) -> String {
    let mut s = format!("{}: {} ({} samples)", report.condition, report.verdict.as_str(), report.samples);
    if let Some(w) = &report.witness {
        let _ = write!(s, "; violated {} with lhs = {}, rhs = {}", w.inequality, w.lhs, w.rhs);
    }
    s
}

/// Combines per-point reports: first witness wins, samples add up.
fn combine(name: &str, seed: u64, reports: &[ConditionReport]) -> ConditionReport {
    let samples = reports.iter().map(|r| r.samples).sum();
    let witness = reports.iter().find_map(|r| r.witness.clone());
    let mut combined = ConditionReport::new(name, samples, seed, witness).detail("points", reports.len());
    if let Some(bad) = reports.iter().find(|r| !r.passed()) {
        combined.details.extend(bad.details.iter().cloned());
    }
    combined
}

pub(super) fn check(cfg: &ExperimentConfig, condition: Condition, out: &mut Output) -> Ran {
    let seed = cfg.seed();
    let report = match condition {
        Condition::F1 => {
            let e = cfg.exponents()?;
            let rhs = e.p * (1.0 + e.sigma / e.n as f64);
            let witness = (!check_f1(&e)).then(|| Witness {
                inequality: "q <= p (1 + sigma/n)".into(),
                x: Vec::new(),
                x_tilde: None,
                z: None,
                z_alt: None,
                lhs: e.q,
                rhs,
            });
            ConditionReport::new("f1", 1, seed, witness)
                .detail("p", e.p)
                .detail("q", e.q)
                .detail("n", e.n)
                .detail("sigma", e.sigma)
                .detail("bound", rhs)
                .detail("margin", f1_margin(&e))
        }
        Condition::F2 => {
            let f = cfg.density()?;
            let c = cfg.constants()?;
            check_f2_sampled(&f, &c, &cfg.domain()?, &cfg.sampler(4096))
                .detail("K1", c.k1)
                .detail("K2", c.k2)
                .detail("K3", c.k3)
        }
        Condition::F3 => {
            let f = cfg.density()?;
            let e = cfg.exponents()?;
            let domain = cfg.domain()?;
            let sampler = cfg.sampler(4096);
            let mut xs = vec![domain.center().to_vec()];
            xs.extend(points_in_ball(&domain, 7, seed));
            let reports: Vec<_> = xs
                .iter()
                .map(|x| check_convexity_sampled(&f, x, e.target_dim, &sampler))
                .collect();
            combine("f3", seed, &reports)
        }
        Condition::F4 => {
            let f = cfg.density()?;
            let e = cfg.exponents()?;
            let mp = cfg.min_point()?;
            let cert = find_min_point_f4(&f, &mp.x, mp.eps, &cfg.domain()?, e.target_dim, &cfg.sampler(4096))?;
            cert.report
        }
        Condition::Zsigma => {
            let z = cfg.zsigma()?;
            check_zsigma(&cfg.weight()?, &z, &cfg.domain()?, &cfg.sampler(100_000))
        }
        Condition::Hprop => hprop(cfg)?,
    };
    write_report(out, &report)?;
    Ok((report.passed(), summarize(&report)))
}

fn hprop(cfg: &ExperimentConfig) -> Result<ConditionReport> {
    let f = cfg.density()?;
    let c = cfg.constants()?;
    let h = cfg.hprop()?;
    let seed = cfg.seed();
    let eps_star = h.eps_star.unwrap_or(DEFAULT_EPS_STAR);
    let params = HPropertyParams::from_constants(&c, h.l, eps_star)?;
    let domain = cfg.domain()?;
    let points = h.points.unwrap_or(20).max(1);
    let eps_min = h.eps_min.unwrap_or(0.05);
    let eps_max = h.eps_max.unwrap_or(0.4);
    if !(eps_min > 0.0 && eps_min <= eps_max && eps_max < eps_star) {
        return Err(cfg.err(
            "hprop",
            None,
            format!("need 0 < eps_min ≤ eps_max < ε* = {eps_star}"),
        ));
    }
    if eps_max >= domain.radius() {
        return Err(cfg.err("hprop", Some("eps_max"), "eps_max must be below the domain radius"));
    }
    let inner = Ball::new(domain.center().to_vec(), domain.radius() - eps_max)?;
    let xs = points_in_ball(&inner, points, seed);
    let sampler = crate::sampling::SamplerConfig {
        budget: h.z_budget.unwrap_or(512),
        ..cfg.sampler(512)
    };
    let ratio = if points > 1 { (eps_max / eps_min).powf(1.0 / (points - 1) as f64) } else { 1.0 };
    let mut reports = Vec::with_capacity(points);
    let mut premise = 0usize;
    for (i, x) in xs.iter().enumerate() {
        let eps = eps_min * ratio.powi(i as i32);
        let r = check_h_property(&f, &params, &c, x, eps, &domain, &sampler)?;
        premise += r
            .details
            .iter()
            .find(|(k, _)| k == "premise_samples")
            .and_then(|(_, v)| v.parse::<usize>().ok())
            .unwrap_or(0);
        reports.push(r);
    }
    Ok(combine("hprop", seed, &reports)
        .detail("A", params.a)
        .detail("L", params.l)
        .detail("b", params.b)
        .detail("alpha", params.alpha)
        .detail("eps_range", format!("{eps_min}..{eps_max}"))
        .detail("premise_samples_total", premise))
}

fn field_csv(out: &mut Output, name: &str, u: &SampledField) -> Result<()> {
    let mut buf = out.header_text().into_bytes();
    write_field_csv(u, &mut buf)?;
    out.raw(name, &buf)
}

pub(super) fn mollify(cfg: &ExperimentConfig, base: &Path, out: &mut Output) -> Ran {
    let m = cfg.mollify()?;
    let p = cfg.exponents().map(|e| e.p).unwrap_or(2.0);
    let grid = cfg.grid()?;
    let mut fields: Vec<(String, SampledField)> = Vec::new();
    if cfg.field.is_some() {
        fields.push(("config".into(), cfg.sampled_field(base)?));
    }
    let target_dim = cfg.density.as_ref().map_or(1, |d| d.target_dim);
    for i in 0..m.fields.unwrap_or(0) {
        let s = cfg.seed().wrapping_add(i as u64);
        let tf = TestField::random_smooth(grid.dim(), target_dim, s);
        fields.push((format!("random-{s}"), tf.sample(&grid)?));
    }
    if fields.is_empty() {
        return Err(cfg.err("mollify", None, "nothing to mollify: add a [field] section or `fields`"));
    }
    let mut csv = String::from("field,eps,du_norm,kernel_norm,c1,bound,max_grad,passed\n");
    let mut all = true;
    let mut checks = 0;
    for (name, u) in &fields {
        for (k, &eps) in m.eps.iter().enumerate() {
            let spec = MollifierSpec::new(eps)?;
            let r = gradient_bound_check(u, &spec, p, None)?;
            all &= r.passed;
            checks += 1;
            let _ = writeln!(
                csv,
                "{name},{},{},{},{},{},{},{}",
                r.eps, r.du_norm, r.kernel_norm, r.c1, r.bound, r.max_grad, r.passed
            );
            if name == "config" {
                field_csv(out, &format!("mollified-{k}.csv"), &mollify_field(u, &spec)?)?;
            }
        }
    }
    out.text("mollify.csv", &csv)?;
    Ok((all, format!("gradient bound: {} ({checks} checks)", if all { "pass" } else { "fail" })))
}

pub(super) fn energy(cfg: &ExperimentConfig, base: &Path, out: &mut Output) -> Ran {
    let f = cfg.density()?;
    let ball = cfg.domain()?;
    let u = cfg.sampled_field(base)?;
    let e = field_energy(&f, &u, &ball)?;
    out.text("energy.txt", &format!("density: {}\nenergy: {e}\n", f.name()))?;
    Ok((true, format!("energy: {e}")))
}

pub(super) fn converge(cfg: &ExperimentConfig, base: &Path, force: bool, out: &mut Output) -> Ran {
    let f = cfg.density()?;
    let c = cfg.constants()?;
    let e = cfg.exponents()?;
    let s = cfg.converge()?;
    let grid = cfg.grid()?;
    let center = s.center.clone().unwrap_or_else(|| vec![0.0; grid.dim()]);
    let ball = Ball::new(center.clone(), s.rho)?;
    let schedule = cfg.schedule()?;
    if !(schedule.eps0 > 0.0 && schedule.eps0 < 1.0f64.min(s.outer_radius - s.rho)) {
        return Err(Error::Precondition(format!(
            "ε₀ = {} violates ε < min(1, R − ρ) = {}",
            schedule.eps0,
            1.0f64.min(s.outer_radius - s.rho)
        )));
    }

    let mut pre = String::new();
    let mut pre_ok = true;
    {
        let outer = Ball::new(center.clone(), s.outer_radius)?;
        let sampler = cfg.sampler(2048);
        let f1 = check_f1(&e);
        let f2 = check_f2_sampled(&f, &c, &outer, &sampler);
        let f3 = check_convexity_sampled(&f, &center, e.target_dim, &sampler);
        let f4 = find_min_point_f4(&f, &center, schedule.eps0, &outer, e.target_dim, &sampler)?;
        for (name, ok) in [("f1", f1), ("f2", f2.passed()), ("f3", f3.passed()), ("f4", f4.certified())] {
            let _ = writeln!(pre, "precheck.{name}: {}", if ok { "pass" } else { "fail" });
            pre_ok &= ok;
        }
    }
    if !pre_ok && !force {
        out.text("prechecks.txt", &pre)?;
        return Err(Error::Precondition(format!(
            "structure pre-checks failed (see prechecks.txt); rerun with --force to proceed\n{pre}"
        )));
    }

    let mut ccfg = ConvergenceConfig::new(ball, s.outer_radius, c, cfg.seed());
    ccfg.schedule = schedule;
    if let Some(v) = s.energy_tol {
        ccfg.energy_tol = v;
    }
    if let Some(v) = s.grad_tol {
        ccfg.grad_tol = v;
    }
    if let Some(v) = s.spot_checks {
        ccfg.spot_checks = v;
    }
    let source = if cfg.is_csv_field() {
        FieldSource::Samples(cfg.sampled_field(base)?)
    } else {
        FieldSource::Analytic(cfg.test_field()?)
    };
    let trace = energy_convergence(&f, &source, &grid, &ccfg)?;
    let mut meta = out.metadata().to_vec();
    for line in pre.lines() {
        if let Some((k, v)) = line.split_once(": ") {
            meta.push((k.to_string(), v.to_string()));
        }
    }
    let mut buf = Vec::new();
    trace
        .write_csv(&mut buf, &meta)
        .map_err(|source| Error::Io {
            path: "converge.csv".into(),
            source,
        })?;
    out.raw("converge.csv", &buf)?;
    let last = trace.last().copied();
    let summary = match last {
        Some(r) => format!(
            "converge: {} at eps = {}: relative energy error {}, relative gradient error {}, domination {}",
            if trace.passed() { "pass" } else { "fail" },
            r.eps,
            r.rel_energy_error,
            r.rel_grad_error,
            if trace.domination_holds() { "holds" } else { "fails" }
        ),
        None => "converge: fail (empty trace)".into(),
    };
    Ok((trace.passed(), summary))
}

pub(super) fn truncate(cfg: &ExperimentConfig, base: &Path, out: &mut Output) -> Ran {
    let t = cfg.truncate()?;
    let f = cfg.density()?;
    let ball = cfg.domain()?;
    let grid = cfg.grid()?;
    let mut fields: Vec<(String, SampledField)> = Vec::new();
    if cfg.field.is_some() {
        fields.push(("config".into(), cfg.sampled_field(base)?));
    }
    let target_dim = cfg.density.as_ref().map_or(1, |d| d.target_dim);
    for i in 0..t.fields.unwrap_or(0) {
        let s = cfg.seed().wrapping_add(i as u64);
        let tf = TestField::random_smooth(grid.dim(), target_dim, s);
        fields.push((format!("random-{s}"), tf.sample(&grid)?));
    }
    if fields.is_empty() {
        return Err(cfg.err("truncate", None, "nothing to truncate: add a [field] section or `fields`"));
    }
    let mut csv = String::from("field,applicable_nodes,contraction_failures,max_ratio,below,above,truncated,defect\n");
    let mut all = true;
    for (name, u) in &fields {
        let g = u.grid();
        let mut idx = vec![0; g.dim()];
        let (mut applicable, mut failures, mut max_ratio) = (0usize, 0usize, 0.0f64);
        for node in 0..g.node_count() {
            g.multi_index(node, &mut idx);
            let interior = idx.iter().zip(g.counts()).all(|(&i, &c)| i > 0 && i + 1 < c);
            if !interior || u.magnitude(node) <= t.k {
                continue;
            }
            applicable += 1;
            let duk = truncation_gradient_identity(u, t.k, node)?.norm();
            let du = gradient_at(u, node).norm();
            if duk > du * (1.0 + 1e-12) + 1e-300 {
                failures += 1;
            }
            if du > 0.0 {
                max_ratio = max_ratio.max(duk / du);
            }
        }
        let first = SampledField::new(
            g.clone(),
            1,
            u.values().iter().step_by(u.target_dim()).copied().collect(),
        )?;
        let split = scalar_truncation_energy_split(&f, &first, t.k, &ball)?;
        let defect_ok = split.defect() <= 1e-9 * (1.0 + split.truncated.abs());
        all &= failures == 0 && defect_ok;
        let _ = writeln!(
            csv,
            "{name},{applicable},{failures},{max_ratio},{},{},{},{}",
            split.below,
            split.above,
            split.truncated,
            split.defect()
        );
    }
    out.text("truncate.csv", &csv)?;
    Ok((
        all,
        format!("truncate: {} ({} fields)", if all { "pass" } else { "fail" }, fields.len()),
    ))
}

pub(super) fn witness(cfg: &ExperimentConfig, kind: WitnessKind, out: &mut Output) -> Ran {
    let (name, transcript) = match kind {
        WitnessKind::NonUhlenbeck => {
            let f = cfg.density()?;
            let rows = cfg.exponents()?.target_dim;
            let w = witness_non_uhlenbeck(&f, &cfg.witness_x()?, rows)?;
            ("non-uhlenbeck", w.transcript())
        }
        WitnessKind::NonProduct => {
            let w = cfg.witness.as_ref();
            let q = w
                .and_then(|w| w.q)
                .or_else(|| cfg.density.as_ref().and_then(|d| d.q))
                .ok_or_else(|| cfg.err("witness", None, "non-product witness needs `q`"))?;
            let t = w.and_then(|w| w.t).unwrap_or(1.0);
            ("non-product", witness_non_product(q, t)?.transcript())
        }
        WitnessKind::Bcdfm | WitnessKind::Bcm | WitnessKind::Hh => {
            let f = cfg.density()?;
            let rows = cfg.exponents()?.target_dim;
            let key = match kind {
                WitnessKind::Bcdfm => "bcdfm",
                WitnessKind::Bcm => "bcm",
                _ => "hh",
            };
            let rival = cfg.rival(key)?;
            let w = witness_rival_structure_failure(&f, &cfg.witness_x()?, rows, &rival, &cfg.scan()?)?;
            (key, w.transcript())
        }
    };
    out.text(&format!("witness-{name}.txt"), &transcript)?;
    let first = transcript.lines().last().unwrap_or("").to_string();
    Ok((true, format!("witness {name}: {first}")))
}

pub(super) fn lavrentiev(cfg: &ExperimentConfig, out: &mut Output) -> Ran {
    let f = cfg.density()?;
    let (lcfg, s) = cfg.lavrentiev()?;
    let boundary = cfg.boundary_datum()?;
    let probe = lavrentiev_probe(&f, &boundary, &lcfg)?;
    let mut buf = Vec::new();
    let io = |source| Error::Io {
        path: "lavrentiev.csv".into(),
        source,
    };
    probe.write_csv(&mut buf, out.metadata()).map_err(io)?;
    out.raw("lavrentiev.csv", &buf)?;
    let mut log = out.header_text().into_bytes();
    probe.write_log_csv(&mut log).map_err(io)?;
    out.raw("lavrentiev-log.csv", &log)?;

    let finest = probe.finest().expect("at least one mesh");
    let gap_tol = s.gap_tol.unwrap_or(0.02);
    let mut checks = vec![
        ("converged", probe.all_converged()),
        ("subclass", probe.levels.iter().all(|l| l.inf_smooth() >= l.inf_full() - 1e-8)),
        ("gap", finest.relative_gap() < gap_tol),
    ];
    if s.decreasing.unwrap_or(true) {
        checks.push(("decreasing", probe.gap_decreasing()));
    }
    if let Some(exact) = s.exact {
        let tol = s.exact_tol.unwrap_or(0.02);
        let close = |v: f64| (v - exact).abs() <= tol * exact.abs();
        checks.push(("exact", close(finest.inf_full()) && close(finest.inf_smooth())));
    }
    let passed = checks.iter().all(|c| c.1);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Ok((
        passed,
        format!(
            "lavrentiev: {} at {} cells: inf full {}, inf smooth {}, relative gap {}{}",
            if passed { "pass" } else { "fail" },
            finest.cells,
            finest.inf_full(),
            finest.inf_smooth(),
            finest.relative_gap(),
            if failed.is_empty() { String::new() } else { format!(" (failed: {})", failed.join(", ")) }
        ),
    ))
}
