//! End-to-end acceptance run. Prints one pass/fail line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dphase::cli::{execute, recipe, Cli, Command, Condition, ExperimentConfig, Outcome, WitnessKind};
use dphase::conditions::{convex_hull_1d, zsigma_sides};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

/// Every CLI run made by the criteria, replayed by the determinism check.
struct Runner {
    root: PathBuf,
    runs: Vec<(Command, String, String)>,
}

impl Runner {
    fn run(&mut self, command: Command, config: &str, name: &str) -> Result<(Outcome, PathBuf), String> {
        let out = self.root.join(name);
        let outcome = run_cli(command.clone(), config, &out)?;
        self.runs.push((command, config.to_string(), name.to_string()));
        Ok((outcome, out))
    }
}

fn run_cli(command: Command, config: &str, out: &Path) -> Result<Outcome, String> {
    let cli = Cli {
        command,
        config: Some(config.to_string()),
        out: out.to_path_buf(),
        seed: None,
        force: false,
    };
    execute(&cli).map_err(|e| format!("{config}: {e}"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_default()
}

/// Value of a `key: value` line.
fn value(text: &str, key: &str) -> Option<String> {
    let prefix = format!("{key}: ");
    text.lines().find_map(|l| l.strip_prefix(&prefix).map(str::to_string))
}

fn number(text: &str, key: &str) -> Result<f64, String> {
    value(text, key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("no numeric `{key}` in report"))
}

fn point(text: &str, key: &str) -> Result<Vec<f64>, String> {
    let v = value(text, key).ok_or_else(|| format!("no `{key}` in witness"))?;
    v.split(';').map(|s| s.parse().map_err(|_| format!("bad {key}: {v}"))).collect()
}

/// Data rows of a CSV file with `#` metadata lines.
fn csv_rows(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let Some(header) = lines.next() else {
        return Vec::new();
    };
    let keys: Vec<&str> = header.split(',').collect();
    lines
        .map(|l| keys.iter().map(|k| k.to_string()).zip(l.split(',').map(str::to_string)).collect())
        .collect()
}

fn cell(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn zsigma_constants(r: &mut Runner) -> Check {
    let (pass, dir) = r.run(Command::Check { condition: Condition::Zsigma }, "zsigma", "zsigma")?;
    let report = read(&dir.join("check-zsigma.txt"));
    let samples = number(&report, "samples")?;
    ensure(pass.passed, || format!("derived constants rejected: {}", pass.summary))?;
    ensure(samples >= 1e5, || format!("only {samples} samples"))?;

    let (fail, dir) = r.run(Command::Check { condition: Condition::Zsigma }, "zsigma-scaled", "zsigma-scaled")?;
    ensure(!fail.passed, || "scaled constants were not rejected".into())?;
    let witness = read(&dir.join("witness-zsigma.txt"));
    let (x, xt) = (point(&witness, "x")?, point(&witness, "x_tilde")?);
    let cfg = ExperimentConfig::parse(recipe("zsigma-scaled").unwrap()).map_err(|e| e.to_string())?;
    let (w, c) = (cfg.weight().map_err(|e| e.to_string())?, cfg.zsigma().map_err(|e| e.to_string())?);
    let (lhs, rhs) = zsigma_sides(&w, &c, &x, &xt);
    ensure(lhs > rhs && lhs == number(&witness, "lhs")? && rhs == number(&witness, "rhs")?, || {
        format!("witness does not reproduce: {lhs} vs {rhs}")
    })?;
    Ok(format!("{samples} pairs pass; scaled witness {lhs:.6} > {rhs:.6} reproduces"))
}

fn h_property(r: &mut Runner) -> Check {
    let (o, dir) = r.run(Command::Check { condition: Condition::Hprop }, "example1", "hprop")?;
    let report = read(&dir.join("check-hprop.txt"));
    ensure(o.passed, || o.summary.clone())?;
    let (samples, points) = (number(&report, "samples")?, number(&report, "points")?);
    ensure(samples >= 1e4 && points == 20.0, || format!("{samples} z at {points} points"))?;
    let cfg = ExperimentConfig::parse(recipe("example1").unwrap()).map_err(|e| e.to_string())?;
    let c = cfg.constants().map_err(|e| e.to_string())?;
    let (p, q) = (c.exponents.p, c.exponents.q);
    let expected = c.k1 + c.k2 * 10f64.powf((q - p) / p);
    let a = number(&report, "A")?;
    ensure((a - expected).abs() <= 1e-12 * expected, || format!("A = {a}, expected {expected}"))?;
    ensure(number(&report, "b")? == 0.0 && number(&report, "alpha")? == p, || "wrong b or alpha".into())?;
    Ok(format!("{samples} z at {points} (x, eps), A = {a:.6}"))
}

fn convergence(r: &mut Runner) -> Check {
    let mut parts = Vec::new();
    for name in ["zhikov-step", "example2"] {
        let (o, dir) = r.run(Command::Converge, name, &format!("converge-{name}"))?;
        ensure(o.passed, || format!("{name}: {}", o.summary))?;
        let rows = csv_rows(&read(&dir.join("converge.csv")));
        let last = rows.last().ok_or("empty trace")?;
        let (e, g) = (cell(last, "rel_energy_error"), cell(last, "rel_grad_error"));
        let dom: f64 = rows.iter().map(|row| cell(row, "domination_failures")).sum();
        ensure(e < 0.01 && g < 0.01 && dom == 0.0, || format!("{name}: energy {e}, gradient {g}, {dom} domination failures"))?;
        parts.push(format!("{name} {e:.1e}/{g:.1e}"));
    }

    let affine = recipe("zhikov-step")
        .unwrap()
        .replace("kind = \"kinked\"\nr = 0.25\nexponent = 1.75", "kind = \"affine\"\nmatrix = [1.0, -0.5, 0.25, 2.0]\noffset = [0.3, -1.0]");
    let path = r.root.join("affine.toml");
    std::fs::write(&path, affine).map_err(|e| e.to_string())?;
    let (o, dir) = r.run(Command::Converge, path.to_str().unwrap(), "converge-affine")?;
    ensure(o.passed, || format!("affine: {}", o.summary))?;
    let worst = csv_rows(&read(&dir.join("converge.csv")))
        .iter()
        .map(|row| cell(row, "rel_energy_error").max(cell(row, "rel_grad_error")))
        .fold(0.0, f64::max);
    ensure(worst < 1e-6, || format!("affine error {worst}"))?;
    parts.push(format!("affine {worst:.1e}"));
    Ok(parts.join(", "))
}

fn mollification_bound(r: &mut Runner) -> Check {
    let (o, dir) = r.run(Command::Mollify, "mollify-bound", "mollify")?;
    ensure(o.passed, || o.summary.clone())?;
    let rows = csv_rows(&read(&dir.join("mollify.csv")));
    let fields: std::collections::BTreeSet<_> = rows.iter().map(|row| row["field"].clone()).collect();
    let eps: std::collections::BTreeSet<_> = rows.iter().map(|row| row["eps"].clone()).collect();
    ensure(fields.len() >= 10 && rows.iter().all(|row| row["passed"] == "true"), || {
        format!("{} fields, {} rows", fields.len(), rows.len())
    })?;
    Ok(format!("{} fields x {} eps", fields.len(), eps.len()))
}

fn oracle(pts: &[(f64, f64)], s: f64) -> f64 {
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

fn hull_oracle(_: &mut Runner) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut nodes = 0;
    for set in 0..100 {
        let size = rng.random_range(2..=50);
        let pts: Vec<(f64, f64)> = (0..size)
            .map(|_| (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect();
        let hull = convex_hull_1d(&pts).map_err(|e| format!("set {set}: {e}"))?;
        let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let grid = (0..=20).map(|k| (lo + (hi - lo) * k as f64 / 20.0).min(hi));
        for s in pts.iter().map(|p| p.0).chain(grid) {
            let got = hull.eval(s).ok_or_else(|| format!("set {set}: no value at {s}"))?;
            let want = oracle(&pts, s);
            ensure((got - want).abs() <= 1e-9, || format!("set {set} at {s}: {got} vs {want}"))?;
            nodes += 1;
        }
    }
    Ok(format!("100 sets, {nodes} nodes agree"))
}

fn witnesses(r: &mut Runner) -> Check {
    let mut parts = Vec::new();
    for (kind, name) in [
        (WitnessKind::NonUhlenbeck, "non-uhlenbeck"),
        (WitnessKind::NonProduct, "non-product"),
        (WitnessKind::Bcdfm, "bcdfm"),
        (WitnessKind::Bcm, "bcm"),
        (WitnessKind::Hh, "hh"),
    ] {
        let t = Instant::now();
        let (o, dir) = r.run(Command::Witness { kind }, "witnesses", &format!("witness-{name}"))?;
        within(t.elapsed(), 1.0)?;
        ensure(o.passed, || format!("{name}: {}", o.summary))?;
        let text = read(&dir.join(format!("witness-{name}.txt")));
        ensure(text.contains(&format!("witness: {name}")), || format!("{name}: no transcript"))?;
        if let Some(rest) = text.lines().find_map(|l| l.strip_prefix("fails at t = ")) {
            let t: f64 = rest.split(':').next().unwrap().trim().parse().map_err(|_| rest.to_string())?;
            ensure(t <= 1024.0, || format!("{name} fails only at t = {t}"))?;
            parts.push(format!("{name} t={t}"));
        } else {
            parts.push(name.to_string());
        }
    }
    Ok(parts.join(", "))
}

fn truncation(r: &mut Runner) -> Check {
    let (o, dir) = r.run(Command::Truncate, "truncation", "truncate")?;
    ensure(o.passed, || o.summary.clone())?;
    let rows = csv_rows(&read(&dir.join("truncate.csv")));
    let nodes: f64 = rows.iter().map(|row| cell(row, "applicable_nodes")).sum();
    let bad = rows
        .iter()
        .any(|row| cell(row, "contraction_failures") != 0.0 || !(cell(row, "defect") <= 1e-9 * (1.0 + cell(row, "truncated"))));
    ensure(rows.len() == 10 && !bad, || format!("{} fields, failures present: {bad}", rows.len()))?;
    Ok(format!("10 fields, {nodes} applicable nodes contract"))
}

fn lavrentiev(r: &mut Runner) -> Check {
    let mut parts = Vec::new();
    for name in ["lavrentiev-dirichlet", "lavrentiev-zhikov"] {
        let (o, dir) = r.run(Command::Lavrentiev, name, name)?;
        ensure(o.passed, || format!("{name}: {}", o.summary))?;
        let rows = csv_rows(&read(&dir.join("lavrentiev.csv")));
        let gaps: Vec<f64> = rows.iter().map(|row| cell(row, "relative_gap")).collect();
        let finest = *gaps.last().ok_or("no mesh levels")?;
        if name == "lavrentiev-dirichlet" {
            let exact = 32.0 / 3.0;
            let err = rows
                .iter()
                .flat_map(|row| [cell(row, "inf_full"), cell(row, "inf_smooth")])
                .map(|e| (e - exact).abs() / exact)
                .fold(0.0, f64::max);
            ensure(err < 0.02 && finest < 0.005, || format!("{name}: error {err}, gap {finest}"))?;
            parts.push(format!("dirichlet error {err:.1e}, gap {finest:.1e}"));
        } else {
            ensure(gaps.len() == 3 && gaps.windows(2).all(|w| w[1] < w[0]) && finest < 0.02, || {
                format!("{name}: gaps {gaps:?}")
            })?;
            parts.push(format!("zhikov gaps {}", gaps.iter().map(|g| format!("{g:.1e}")).collect::<Vec<_>>().join(" > ")));
        }
    }
    Ok(parts.join("; "))
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let path = entry.path();
        if path.is_file() {
            out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
        }
    }
    out
}

fn determinism(r: &Runner) -> Check {
    let rerun = r.root.join("rerun");
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (command, config, name) in &r.runs {
        let dir = rerun.join(name);
        single.install(|| run_cli(command.clone(), config, &dir))?;
        let (a, b) = (files(&r.root.join(name)), files(&dir));
        ensure(!a.is_empty() && a == b, || format!("{name}: outputs differ on rerun"))?;
        compared += a.len();
    }
    let again = hull_oracle(&mut Runner { root: rerun.clone(), runs: Vec::new() })?;
    ensure(again == hull_oracle(&mut Runner { root: rerun, runs: Vec::new() })?, || "hull run differs".into())?;
    Ok(format!("{} runs, {compared} files byte-identical on one thread", r.runs.len()))
}

type Criterion = (&'static str, f64, fn(&mut Runner) -> Check);

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut runner = Runner {
        root: tmp.path().to_path_buf(),
        runs: Vec::new(),
    };
    let criteria: [Criterion; 8] = [
        ("zsigma constants", 5.0, zsigma_constants),
        ("h-property certificate", 10.0, h_property),
        ("energy convergence", 60.0, convergence),
        ("mollification gradient bound", 10.0, mollification_bound),
        ("convex hull oracle", 1.0, hull_oracle),
        ("counterexample witnesses", 5.0, witnesses),
        ("truncation", 5.0, truncation),
        ("lavrentiev probe", 300.0, lavrentiev),
    ];
    let mut failed = 0;
    let mut report = |i: usize, name: &str, t: Duration, result: Check| {
        match result {
            Ok(msg) => println!("criterion {i} {name}: PASS ({:.2} s) {msg}", t.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("criterion {i} {name}: FAIL ({:.2} s) {msg}", t.as_secs_f64());
            }
        }
    };
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = check(&mut runner);
        let elapsed = t.elapsed();
        report(i + 1, name, elapsed, result.and_then(|m| within(elapsed, *limit).map(|_| m)));
    }
    let t = Instant::now();
    let result = determinism(&runner);
    report(9, "determinism", t.elapsed(), result);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
