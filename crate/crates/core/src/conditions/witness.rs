use std::fmt::Write as _;

use crate::densities::{eval_g, DensitySpec};
use crate::error::{invalid, Error, Result};
use crate::fields::GradientMatrix;

use super::report::join;

/// `z` and `−z` with equal norm but different density values.
#[derive(Debug, Clone, PartialEq)]
pub struct NonUhlenbeckWitness {
    pub x: Vec<f64>,
    pub z: GradientMatrix,
    pub f_z: f64,
    pub f_minus_z: f64,
}

impl NonUhlenbeckWitness {
    pub fn transcript(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "witness: non-uhlenbeck");
        let _ = writeln!(s, "x: {}", join(&self.x));
        let _ = writeln!(s, "z: {}", join(self.z.as_slice()));
        let _ = writeln!(s, "|z|: {}", self.z.norm());
        let _ = writeln!(s, "f(x,z): {}", self.f_z);
        let _ = writeln!(s, "f(x,-z): {}", self.f_minus_z);
        let _ = writeln!(
            s,
            "conclusion: |z| = |-z| but f(x,z) != f(x,-z), so f(x,z) is not a function of (x, |z|)"
        );
        s
    }
}

/// Evaluates `f` at `z = e` (the unit matrix with `z_n^1 = 1`) and at `−z`.
///
/// Fails with [`Error::Precondition`] when the two values agree, as they do
/// for Example 1 where `a(x) = 0`.
pub fn witness_non_uhlenbeck(f: &DensitySpec, x: &[f64], rows: usize) -> Result<NonUhlenbeckWitness> {
    let z = GradientMatrix::last_direction_unit(rows, x.len(), 1.0);
    let f_z = f.eval(x, z.view())?;
    let f_minus_z = f.eval(x, z.scaled(-1.0).view())?;
    if f_z == f_minus_z {
        return Err(Error::Precondition(format!(
            "f(x,z) = f(x,-z) = {f_z} at x = {x:?}; no witness here (is a(x) = 0?)"
        )));
    }
    Ok(NonUhlenbeckWitness {
        x: x.to_vec(),
        z,
        f_z,
        f_minus_z,
    })
}

/// One evaluation `g(x₁, t)` together with what it says about a product `a(x₁)h(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GFact {
    pub x1: f64,
    pub t: f64,
    pub value: f64,
    pub meaning: String,
}

/// The contradiction showing `g(x₁, t) ≠ a(x₁) h(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonProductTranscript {
    pub q: f64,
    pub t: f64,
    pub facts: Vec<GFact>,
    pub conclusion: String,
}

impl NonProductTranscript {
    pub fn transcript(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "witness: non-product");
        let _ = writeln!(s, "q: {}", self.q);
        let _ = writeln!(s, "t: {}", self.t);
        for f in &self.facts {
            let _ = writeln!(s, "g({}, {}) = {}  => {}", f.x1, f.t, f.value, f.meaning);
        }
        let _ = writeln!(s, "conclusion: {}", self.conclusion);
        s
    }
}

/// Evaluates `g` at `(t/2, t)`, `(2t, 4t)`, `(2t, t)` and at a few `t' ≤ 0`,
/// asserting the signs that make a product form impossible.
pub fn witness_non_product(q: f64, t: f64) -> Result<NonProductTranscript> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(invalid(format!("need q > 1, got {q}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid(format!("need t > 0, got {t}")));
    }
    let mut facts = Vec::new();
    let below = eval_g(t / 2.0, t, q);
    facts.push(GFact {
        x1: t / 2.0,
        t,
        value: below,
        meaning: "0 < x1 < t gives g > 0, so h(t) != 0".into(),
    });
    let a_pos = eval_g(2.0 * t, 4.0 * t, q);
    facts.push(GFact {
        x1: 2.0 * t,
        t: 4.0 * t,
        value: a_pos,
        meaning: "g > 0 here, so a(2t) != 0".into(),
    });
    let above = eval_g(2.0 * t, t, q);
    facts.push(GFact {
        x1: 2.0 * t,
        t,
        value: above,
        meaning: "0 < t < x1 gives g = 0 with a(2t) != 0, so h(t) = 0".into(),
    });
    for (x1, tn) in [(-1.0, -t), (0.0, -t), (t, 0.0), (2.0 * t, -2.0 * t)] {
        let v = eval_g(x1, tn, q);
        if v != 0.0 {
            return Err(Error::Precondition(format!("g({x1}, {tn}) = {v}, expected 0")));
        }
        facts.push(GFact {
            x1,
            t: tn,
            value: v,
            meaning: "t <= 0 gives g = 0".into(),
        });
    }
    if !(below > 0.0 && a_pos > 0.0 && above == 0.0) {
        return Err(Error::Precondition(format!(
            "unexpected signs: g(t/2,t) = {below}, g(2t,4t) = {a_pos}, g(2t,t) = {above}"
        )));
    }
    Ok(NonProductTranscript {
        q,
        t,
        facts,
        conclusion: format!("h({t}) != 0 and h({t}) = 0; g is not of the form a(x1) h(t)"),
    })
}

/// Structure assumption of a rival framework, with its constants fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RivalStructureSpec {
    /// `ν₁(|z|^p̃ + ã|z|^q̃) ≤ f(x,z) ≤ ν₂(|z|^p̃ + ã|z|^q̃)` with `ã = ã(x)`.
    Bcdfm {
        nu1: f64,
        nu2: f64,
        p_tilde: f64,
        q_tilde: f64,
        a_tilde: f64,
    },
    /// `ν M(x,βz) ≤ f(x,z) ≤ L(M(x,z) + g(x))` with `M` even in `z`; reduced
    /// along `z = t e` with `t < 0` to
    /// `f(x, −βz) ≤ L(f(x,z)/ν + g(x))`.
    Bcm { nu: f64, beta: f64, l: f64, g: f64 },
    /// `|z'| |A(x,z')| ≤ L A(x,z) : z` for `|z'| = |z|`, where `A = ∂f/∂z`;
    /// tested at `z' = t e`, `z = −z'`.
    HhGrowth { l: f64 },
}

impl RivalStructureSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RivalStructureSpec::Bcdfm { .. } => "bcdfm",
            RivalStructureSpec::Bcm { .. } => "bcm",
            RivalStructureSpec::HhGrowth { .. } => "hh",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RivalStructureSpec::Bcdfm {
                nu1,
                nu2,
                p_tilde,
                q_tilde,
                a_tilde,
            } => nu1 > 0.0 && nu2 > 0.0 && p_tilde >= 1.0 && q_tilde >= p_tilde && a_tilde >= 0.0,
            RivalStructureSpec::Bcm { nu, beta, l, g } => {
                nu > 0.0 && nu < 1.0 && beta > 0.0 && beta < 1.0 && l > 1.0 && g >= 0.0
            }
            RivalStructureSpec::HhGrowth { l } => l >= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid rival constants: {self:?}")))
        }
    }
}

/// The `t` values to try, in order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TScan {
    /// `from, from + step, …` up to `to`.
    Linear { from: f64, to: f64, step: f64 },
    /// `base^k` for `k = 0..=max_exp`.
    Powers { base: f64, max_exp: u32 },
}

impl TScan {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            TScan::Linear { from, to, step } => {
                if !(step > 0.0) {
                    return vec![];
                }
                let count = ((to - from) / step + 1e-9).floor();
                if !(count >= 0.0) {
                    return vec![];
                }
                (0..=count as usize).map(|k| from + k as f64 * step).collect()
            }
            TScan::Powers { base, max_exp } => (0..=max_exp).map(|k| base.powi(k as i32)).collect(),
        }
    }
}

/// One scanned `t` with both sides of the rival inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// The first scanned `t` where the rival inequality `lhs ≤ rhs` fails.
#[derive(Debug, Clone, PartialEq)]
pub struct RivalWitness {
    pub rival: RivalStructureSpec,
    pub inequality: String,
    pub x: Vec<f64>,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Every evaluated row up to and including the failing one.
    pub rows: Vec<ScanRow>,
}

impl RivalWitness {
    pub fn transcript(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "witness: {}", self.rival.name());
        let _ = writeln!(s, "constants: {:?}", self.rival);
        let _ = writeln!(s, "x: {}", join(&self.x));
        let _ = writeln!(s, "inequality: {}", self.inequality);
        let _ = writeln!(s, "t,lhs,rhs,holds");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.t, r.lhs, r.rhs, r.lhs <= r.rhs);
        }
        let _ = writeln!(s, "fails at t = {}: {} > {}", self.t, self.lhs, self.rhs);
        s
    }
}

fn frob_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Both sides of the rival inequality at scan value `t > 0`. For BCDFM the
/// lower bound (at `t e_1^1`) is checked first, then the upper bound (at
/// `t e_n^1`), and the first failing pair is returned.
pub fn rival_sides(f: &DensitySpec, x: &[f64], rows: usize, rival: &RivalStructureSpec, t: f64) -> (String, f64, f64) {
    let n = x.len();
    let e_n = |s: f64| GradientMatrix::last_direction_unit(rows, n, s);
    match *rival {
        RivalStructureSpec::Bcdfm {
            nu1,
            nu2,
            p_tilde,
            q_tilde,
            a_tilde,
        } => {
            let model = t.powf(p_tilde) + a_tilde * t.powf(q_tilde);
            let mut e11 = GradientMatrix::zeros(rows, n);
            e11.set(0, 0, t);
            let lower = (nu1 * model, f.value(x, e11.view()));
            if lower.0 > lower.1 {
                return ("nu1 (t^p~ + a~ t^q~) <= f(x, t e_1^1)".into(), lower.0, lower.1);
            }
            (
                "f(x, t e_n^1) <= nu2 (t^p~ + a~ t^q~)".into(),
                f.value(x, e_n(t).view()),
                nu2 * model,
            )
        }
        RivalStructureSpec::Bcm { nu, beta, l, g } => (
            "f(x, beta |t| e_n^1) <= L (f(x, -|t| e_n^1)/nu + g)".into(),
            f.value(x, e_n(beta * t).view()),
            l * (f.value(x, e_n(-t).view()) / nu + g),
        ),
        RivalStructureSpec::HhGrowth { l } => {
            let zp = e_n(t);
            let z = e_n(-t);
            let mut a_zp = vec![0.0; rows * n];
            let mut a_z = vec![0.0; rows * n];
            f.add_grad_z(x, zp.view(), &mut a_zp);
            f.add_grad_z(x, z.view(), &mut a_z);
            let norm_a = frob_dot(&a_zp, &a_zp).sqrt();
            (
                "|z'| |A(x,z')| <= L A(x,z):z, z' = t e_n^1, z = -z'".into(),
                zp.norm() * norm_a,
                l * frob_dot(&a_z, z.as_slice()),
            )
        }
    }
}

/// Scans `t` and returns the first value where the rival inequality fails.
/// For BCM the scanned value is `|t|`, with `t < 0`.
pub fn witness_rival_structure_failure(
    f: &DensitySpec,
    x: &[f64],
    rows: usize,
    rival: &RivalStructureSpec,
    scan: &TScan,
) -> Result<RivalWitness> {
    rival.validate()?;
    let ts = scan.values();
    if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(invalid(format!("scan must list positive finite t values: {scan:?}")));
    }
    let mut rows_out = Vec::new();
    for &t in &ts {
        let (inequality, lhs, rhs) = rival_sides(f, x, rows, rival, t);
        rows_out.push(ScanRow { t, lhs, rhs });
        if lhs > rhs {
            return Ok(RivalWitness {
                rival: *rival,
                inequality,
                x: x.to_vec(),
                t,
                lhs,
                rhs,
                rows: rows_out,
            });
        }
    }
    Err(Error::Inconclusive(format!(
        "{} inequality held for every t up to {}; try a larger range",
        rival.name(),
        ts[ts.len() - 1]
    )))
}
