use std::fmt::Write as _;

use crate::fields::GradientMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// No violation among the samples. Never a proof.
    PassOnSamples,
    Fail,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::PassOnSamples => "pass-on-samples",
            Verdict::Fail => "fail",
        }
    }
}

/// A sample at which an inequality `lhs ≤ rhs` was violated.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    /// Which inequality failed, e.g. `f(x,z) <= K1 f(x~,z) + ...`.
    pub inequality: String,
    pub x: Vec<f64>,
    pub x_tilde: Option<Vec<f64>>,
    pub z: Option<GradientMatrix>,
    pub z_alt: Option<GradientMatrix>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of one sampled check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub condition: String,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub samples: usize,
    pub seed: u64,
    /// Extra `key: value` facts (constants used, largest observed ratio, ...).
    pub details: Vec<(String, String)>,
}

impl ConditionReport {
    pub(crate) fn new(condition: &str, samples: usize, seed: u64, witness: Option<Witness>) -> Self {
        Self {
            condition: condition.to_string(),
            verdict: if witness.is_some() {
                Verdict::Fail
            } else {
                Verdict::PassOnSamples
            },
            witness,
            samples,
            seed,
            details: Vec::new(),
        }
    }

    pub(crate) fn detail(mut self, key: &str, value: impl ToString) -> Self {
        self.details.push((key.to_string(), value.to_string()));
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::PassOnSamples
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "condition: {}", self.condition);
        let _ = writeln!(s, "verdict: {}", self.verdict.as_str());
        let _ = writeln!(s, "samples: {}", self.samples);
        let _ = writeln!(s, "seed: {}", self.seed);
        for (k, v) in &self.details {
            let _ = writeln!(s, "{k}: {v}");
        }
        if let Some(w) = &self.witness {
            let _ = writeln!(s, "witness.inequality: {}", w.inequality);
            let _ = writeln!(s, "witness.x: {}", join(&w.x));
            if let Some(xt) = &w.x_tilde {
                let _ = writeln!(s, "witness.x_tilde: {}", join(xt));
            }
            if let Some(z) = &w.z {
                let _ = writeln!(s, "witness.z: {}", join(z.as_slice()));
            }
            if let Some(z) = &w.z_alt {
                let _ = writeln!(s, "witness.z_alt: {}", join(z.as_slice()));
            }
            let _ = writeln!(s, "witness.lhs: {}", w.lhs);
            let _ = writeln!(s, "witness.rhs: {}", w.rhs);
        }
        s
    }

    pub const CSV_HEADER: &'static str = "condition,verdict,samples,seed,lhs,rhs,x,x_tilde,z";

    /// One CSV row matching [`Self::CSV_HEADER`]; vectors are `;`-separated.
    pub fn to_csv_row(&self) -> String {
        let w = self.witness.as_ref();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.condition,
            self.verdict.as_str(),
            self.samples,
            self.seed,
            w.map(|w| w.lhs.to_string()).unwrap_or_default(),
            w.map(|w| w.rhs.to_string()).unwrap_or_default(),
            w.map(|w| join(&w.x)).unwrap_or_default(),
            w.and_then(|w| w.x_tilde.as_ref()).map(|v| join(v)).unwrap_or_default(),
            w.and_then(|w| w.z.as_ref()).map(|z| join(z.as_slice())).unwrap_or_default(),
        )
    }
}

pub(crate) fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// `lhs ≤ rhs` fails beyond `tol`, scaled by the magnitude of the sides.
#[inline]
pub(crate) fn violates(lhs: f64, rhs: f64, tol: f64) -> bool {
    lhs - rhs > tol * (1.0 + lhs.abs().max(rhs.abs())) || lhs.is_nan() || rhs.is_nan()
}

/// Tolerance for algebraic identities and sampled inequalities.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Tolerance for hull and oracle agreement.
pub const ORACLE_TOL: f64 = 1e-9;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_csv_render_witness() {
        let r = ConditionReport::new(
            "f2",
            10,
            3,
            Some(Witness {
                inequality: "a <= b".into(),
                x: vec![0.5, 0.0],
                x_tilde: Some(vec![0.4, 0.0]),
                z: Some(GradientMatrix::zeros(1, 2)),
                z_alt: None,
                lhs: 2.0,
                rhs: 1.0,
            }),
        )
        .detail("k1", 1);
        let text = r.to_text();
        assert!(text.contains("verdict: fail\n"));
        assert!(text.contains("witness.x_tilde: 0.4;0\n"));
        assert!(text.contains("k1: 1\n"));
        assert_eq!(r.to_csv_row(), "f2,fail,10,3,2,1,0.5;0,0.4;0,0;0");
        assert_eq!(r.to_csv_row().split(',').count(), ConditionReport::CSV_HEADER.split(',').count());
    }

    #[test]
    fn violation_is_scaled() {
        assert!(!violates(1e12 + 1e-3, 1e12, IDENTITY_TOL));
        assert!(violates(1.0 + 1e-9, 1.0, IDENTITY_TOL));
        assert!(violates(f64::NAN, 1.0, IDENTITY_TOL));
    }
}
