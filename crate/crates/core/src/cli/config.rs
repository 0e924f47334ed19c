use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::approx::{EpsSchedule, LavrentievConfig, TestField};
use crate::conditions::{RivalStructureSpec, StructureConstants, TScan, ZsigmaConstants};
use crate::densities::{DensitySpec, ExponentConfig, WeightSpec};
use crate::error::{Error, Result};
use crate::fields::{read_field_csv, Ball, GradientMatrix, Grid, SampledField};
use crate::sampling::SamplerConfig;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    /// `zhikov`, `example1`, `example2` or `p-power`.
    pub kind: String,
    pub p: f64,
    pub q: Option<f64>,
    #[serde(default = "two")]
    pub n: usize,
    #[serde(default = "one")]
    pub target_dim: usize,
    /// Defaults to the weight's exponent, or 1.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    /// `zero`, `constant`, `holder`, `step` or `two-threshold`.
    pub kind: String,
    pub value: Option<f64>,
    pub coef: Option<f64>,
    pub shift: Option<f64>,
    pub r: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub sigma: Option<f64>,
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub k3: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZsigmaSection {
    pub c5: Option<f64>,
    pub c6: Option<f64>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub center: Option<Vec<f64>>,
    pub radius: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub budget: Option<usize>,
    pub seed: Option<u64>,
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpropSection {
    pub l: f64,
    pub eps_star: Option<f64>,
    /// Number of sampled `(x, ε)`.
    pub points: Option<usize>,
    pub eps_min: Option<f64>,
    pub eps_max: Option<f64>,
    /// `z` samples per `(x, ε)`.
    pub z_budget: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinPointSection {
    pub x: Vec<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    /// `kinked`, `affine`, `saddle`, `random` or `csv`.
    pub kind: String,
    pub r: Option<f64>,
    pub exponent: Option<f64>,
    pub target_dim: Option<usize>,
    /// Row-major `N × n` matrix of an affine field.
    pub matrix: Option<Vec<f64>>,
    pub offset: Option<Vec<f64>>,
    pub path: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifySection {
    pub eps: Vec<f64>,
    /// Number of seeded random smooth fields for the gradient bound.
    pub fields: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    pub rho: f64,
    pub outer_radius: f64,
    pub center: Option<Vec<f64>>,
    pub eps0: Option<f64>,
    pub ratio: Option<f64>,
    pub steps: Option<usize>,
    pub energy_tol: Option<f64>,
    pub grad_tol: Option<f64>,
    pub spot_checks: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncateSection {
    pub k: f64,
    /// Number of seeded random smooth fields.
    pub fields: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessSection {
    pub x: Option<Vec<f64>>,
    pub q: Option<f64>,
    pub t: Option<f64>,
    /// `linear` or `powers`.
    pub scan: Option<String>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub step: Option<f64>,
    pub base: Option<f64>,
    pub max_exp: Option<u32>,
    pub nu1: Option<f64>,
    pub nu2: Option<f64>,
    pub p_tilde: Option<f64>,
    pub q_tilde: Option<f64>,
    pub a_tilde: Option<f64>,
    pub nu: Option<f64>,
    pub beta: Option<f64>,
    /// `L` of the growth test.
    pub l: Option<f64>,
    /// `L` of the BCM bounds.
    pub bcm_l: Option<f64>,
    pub g: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LavrentievSection {
    pub meshes: Vec<usize>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Boundary datum: `saddle`, or the `[field]` section when `field`.
    pub boundary: Option<String>,
    pub eps_factor: Option<f64>,
    pub grad_tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// Largest accepted relative gap at the finest mesh.
    pub gap_tol: Option<f64>,
    /// Require the relative gap to shrink from mesh to mesh.
    pub decreasing: Option<bool>,
    /// Exact minimum, when known, and the accepted relative error.
    pub exact: Option<f64>,
    pub exact_tol: Option<f64>,
}

/// Everything a subcommand may read. Sections are optional; each command
/// asks for what it needs.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub density: Option<DensitySection>,
    pub weight: Option<WeightSection>,
    pub constants: Option<ConstantsSection>,
    pub zsigma: Option<ZsigmaSection>,
    pub domain: Option<DomainSection>,
    pub sampler: Option<SamplerSection>,
    pub hprop: Option<HpropSection>,
    pub min_point: Option<MinPointSection>,
    pub field: Option<FieldSection>,
    pub grid: Option<GridSection>,
    pub mollify: Option<MollifySection>,
    pub converge: Option<ConvergeSection>,
    pub truncate: Option<TruncateSection>,
    pub witness: Option<WitnessSection>,
    pub lavrentiev: Option<LavrentievSection>,
    #[serde(skip)]
    text: String,
    #[serde(skip)]
    seed_override: Option<u64>,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map_or(1, |s| line_at(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        cfg.text = text.to_string();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed_override = seed;
        self
    }

    /// SHA-256 of the config text, hex encoded.
    pub fn digest(&self) -> String {
        Sha256::digest(self.text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed_override
            .or_else(|| self.sampler.as_ref().and_then(|s| s.seed))
            .unwrap_or(0)
    }

    /// Line of `[section]` (or of `key` inside it), for error messages.
    pub fn line_of(&self, section: &str, key: Option<&str>) -> usize {
        let header = format!("[{section}]");
        let mut in_section = false;
        let mut header_line = 0;
        for (i, line) in self.text.lines().enumerate() {
            let t = line.trim();
            if t.starts_with('[') {
                in_section = t == header;
                if in_section {
                    header_line = i + 1;
                }
                continue;
            }
            if let (true, Some(k)) = (in_section, key) {
                if t.split('=').next().map(str::trim) == Some(k) {
                    return i + 1;
                }
            }
        }
        header_line.max(1)
    }

    pub(crate) fn err(&self, section: &str, key: Option<&str>, message: impl Into<String>) -> Error {
        Error::Config {
            line: self.line_of(section, key),
            message: message.into(),
        }
    }

    fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T> {
        s.as_ref()
            .ok_or_else(|| self.err(name, None, format!("missing [{name}] section")))
    }

    fn need<T: Copy>(&self, v: Option<T>, section: &str, key: &str) -> Result<T> {
        v.ok_or_else(|| self.err(section, None, format!("[{section}] needs `{key}`")))
    }

    /// Re-labels a library validation error with the line of `section`.
    fn at<T>(&self, r: Result<T>, section: &str) -> Result<T> {
        r.map_err(|e| match e {
            Error::InvalidParameter(m) | Error::DimensionMismatch(m) => self.err(section, None, m),
            other => other,
        })
    }

    pub fn weight(&self) -> Result<WeightSpec> {
        let Some(w) = &self.weight else {
            return Ok(WeightSpec::Zero);
        };
        let need = |v: Option<f64>, key: &str| self.need(v, "weight", key);
        let spec = match w.kind.as_str() {
            "zero" => WeightSpec::Zero,
            "constant" => WeightSpec::Constant(need(w.value, "value")?),
            "holder" => WeightSpec::Holder {
                coef: need(w.coef, "coef")?,
                shift: w.shift.unwrap_or(0.0),
                sigma: need(w.sigma, "sigma")?,
            },
            "step" => WeightSpec::StepHolder {
                r: need(w.r, "r")?,
                sigma: need(w.sigma, "sigma")?,
                h: need(w.h, "h")?,
            },
            "two-threshold" => WeightSpec::TwoThreshold {
                r1: need(w.r1, "r1")?,
                r2: need(w.r2, "r2")?,
                sigma: need(w.sigma, "sigma")?,
                h: need(w.h, "h")?,
            },
            other => {
                return Err(self.err(
                    "weight",
                    Some("kind"),
                    format!("unknown weight `{other}`; expected zero, constant, holder, step or two-threshold"),
                ))
            }
        };
        self.at(spec.validate(), "weight")?;
        Ok(spec)
    }

    pub fn density(&self) -> Result<DensitySpec> {
        let d = self.section(&self.density, "density")?;
        let q = || self.need(d.q, "density", "q");
        let f = match d.kind.as_str() {
            "zhikov" => DensitySpec::zhikov(d.p, q()?, self.weight()?),
            "example1" => DensitySpec::example1(d.p, q()?, self.weight()?),
            "example2" => DensitySpec::example2(d.p, q()?),
            "p-power" => DensitySpec::PPower { p: d.p },
            other => {
                return Err(self.err(
                    "density",
                    Some("kind"),
                    format!("unknown density `{other}`; expected zhikov, example1, example2 or p-power"),
                ))
            }
        };
        self.at(f.validate(), "density")?;
        Ok(f)
    }

    pub fn exponents(&self) -> Result<ExponentConfig> {
        let d = self.section(&self.density, "density")?;
        let weight_sigma = match self.weight.as_ref().map(|_| self.weight()).transpose()? {
            Some(WeightSpec::Holder { sigma, .. })
            | Some(WeightSpec::StepHolder { sigma, .. })
            | Some(WeightSpec::TwoThreshold { sigma, .. }) => Some(sigma),
            _ => None,
        };
        let sigma = d.sigma.or(weight_sigma).unwrap_or(1.0);
        self.at(
            ExponentConfig::new(d.p, d.q.unwrap_or(d.p), d.n, d.target_dim, sigma),
            "density",
        )
    }

    /// The weight's Z^σ constants: explicit `c5`/`c6` if given, otherwise the
    /// closed form for the weight, times `scale`.
    pub fn zsigma(&self) -> Result<ZsigmaConstants> {
        let w = self.weight()?;
        let s = self.zsigma.clone().unwrap_or_default();
        let base = match (s.c5, s.c6) {
            (Some(c5), Some(c6)) => {
                let sigma = match w {
                    WeightSpec::Holder { sigma, .. }
                    | WeightSpec::StepHolder { sigma, .. }
                    | WeightSpec::TwoThreshold { sigma, .. } => sigma,
                    _ => self.exponents().map(|e| e.sigma).unwrap_or(1.0),
                };
                self.at(ZsigmaConstants::new(c5, c6, sigma), "zsigma")?
            }
            (None, None) => ZsigmaConstants::for_weight(&w)
                .ok_or_else(|| self.err("zsigma", None, "no closed-form constants for this weight; give c5 and c6"))?,
            _ => return Err(self.err("zsigma", None, "give both c5 and c6, or neither")),
        };
        Ok(match s.scale {
            Some(f) if f > 0.0 => base.scaled(f),
            Some(f) => return Err(self.err("zsigma", Some("scale"), format!("scale must be positive, got {f}"))),
            None => base,
        })
    }

    /// `K₁, K₂, K₃` from `[constants]`, or inherited from the weight's Z^σ
    /// constants.
    pub fn constants(&self) -> Result<StructureConstants> {
        let e = self.exponents()?;
        match &self.constants {
            Some(c) => {
                let k = (
                    self.need(c.k1, "constants", "k1")?,
                    self.need(c.k2, "constants", "k2")?,
                    self.need(c.k3, "constants", "k3")?,
                );
                self.at(StructureConstants::new(k.0, k.1, k.2, e), "constants")
            }
            None => {
                let z = self.zsigma()?;
                self.at(StructureConstants::from_zsigma(&z, e), "constants")
            }
        }
    }

    pub fn domain(&self) -> Result<Ball> {
        let d = self.section(&self.domain, "domain")?;
        let n = self.exponents().map(|e| e.n).unwrap_or(2);
        let center = d.center.clone().unwrap_or_else(|| vec![0.0; n]);
        self.at(Ball::new(center, d.radius), "domain")
    }

    pub fn sampler(&self, default_budget: usize) -> SamplerConfig {
        let s = self.sampler.clone().unwrap_or_default();
        let mut cfg = SamplerConfig::new(s.budget.unwrap_or(default_budget), self.seed());
        if let Some(v) = s.z_min {
            cfg.z_min = v;
        }
        if let Some(v) = s.z_max {
            cfg.z_max = v;
        }
        cfg
    }

    pub fn hprop(&self) -> Result<&HpropSection> {
        self.section(&self.hprop, "hprop")
    }

    pub fn min_point(&self) -> Result<&MinPointSection> {
        self.section(&self.min_point, "min_point")
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = self.section(&self.grid, "grid")?;
        let n = self.exponents().map(|e| e.n).unwrap_or(2);
        self.at(Grid::cube(n, g.lo, g.hi, g.cells), "grid")
    }

    pub fn test_field(&self) -> Result<TestField> {
        let f = self.section(&self.field, "field")?;
        let target_dim = f
            .target_dim
            .or_else(|| self.density.as_ref().map(|d| d.target_dim))
            .unwrap_or(1);
        let n = self.exponents().map(|e| e.n).unwrap_or(2);
        let tf = match f.kind.as_str() {
            "kinked" => TestField::Kinked {
                r: f.r.unwrap_or(0.0),
                exponent: f.exponent.unwrap_or(1.0),
                target_dim,
            },
            "affine" => {
                let m = f
                    .matrix
                    .clone()
                    .ok_or_else(|| self.err("field", None, "[field] needs `matrix`"))?;
                let a = self.at(GradientMatrix::from_rows(target_dim, n, m), "field")?;
                let b = f.offset.clone().unwrap_or_else(|| vec![0.0; target_dim]);
                TestField::Affine { a, b }
            }
            "saddle" => TestField::Saddle,
            "random" => TestField::random_smooth(n, target_dim, f.seed.unwrap_or_else(|| self.seed())),
            "csv" => return Err(self.err("field", Some("kind"), "a csv field has no closed form")),
            other => {
                return Err(self.err(
                    "field",
                    Some("kind"),
                    format!("unknown field `{other}`; expected kinked, affine, saddle, random or csv"),
                ))
            }
        };
        self.at(tf.validate(n), "field")?;
        Ok(tf)
    }

    /// The field sampled on `[grid]`, or read from `path` relative to `base`.
    pub fn sampled_field(&self, base: &Path) -> Result<SampledField> {
        let grid = self.grid()?;
        let f = self.section(&self.field, "field")?;
        if f.kind == "csv" {
            let rel = f
                .path
                .as_ref()
                .ok_or_else(|| self.err("field", None, "[field] kind = \"csv\" needs `path`"))?;
            let path = base.join(rel);
            let file = std::fs::File::open(&path).map_err(|source| Error::Io { path, source })?;
            return read_field_csv(std::io::BufReader::new(file), &grid);
        }
        self.test_field()?.sample(&grid)
    }

    pub fn is_csv_field(&self) -> bool {
        self.field.as_ref().is_some_and(|f| f.kind == "csv")
    }

    pub fn mollify(&self) -> Result<&MollifySection> {
        self.section(&self.mollify, "mollify")
    }

    pub fn converge(&self) -> Result<&ConvergeSection> {
        self.section(&self.converge, "converge")
    }

    pub fn schedule(&self) -> Result<EpsSchedule> {
        let c = self.converge()?;
        let d = EpsSchedule::default_for(c.rho, c.outer_radius);
        Ok(EpsSchedule {
            eps0: c.eps0.unwrap_or(d.eps0),
            ratio: c.ratio.unwrap_or(d.ratio),
            steps: c.steps.unwrap_or(d.steps),
        })
    }

    pub fn truncate(&self) -> Result<&TruncateSection> {
        self.section(&self.truncate, "truncate")
    }

    pub fn witness(&self) -> Result<&WitnessSection> {
        self.section(&self.witness, "witness")
    }

    pub fn witness_x(&self) -> Result<Vec<f64>> {
        let n = self.exponents().map(|e| e.n).unwrap_or(2);
        Ok(self.witness.as_ref().and_then(|w| w.x.clone()).unwrap_or_else(|| vec![0.0; n]))
    }

    pub fn scan(&self) -> Result<TScan> {
        let w = self.witness()?;
        match w.scan.as_deref().unwrap_or("powers") {
            "powers" => Ok(TScan::Powers {
                base: w.base.unwrap_or(2.0),
                max_exp: w.max_exp.unwrap_or(10),
            }),
            "linear" => Ok(TScan::Linear {
                from: self.need(w.from, "witness", "from")?,
                to: self.need(w.to, "witness", "to")?,
                step: self.need(w.step, "witness", "step")?,
            }),
            other => Err(self.err(
                "witness",
                Some("scan"),
                format!("unknown scan `{other}`; expected powers or linear"),
            )),
        }
    }

    pub fn rival(&self, name: &str) -> Result<RivalStructureSpec> {
        let w = self.witness()?;
        let need = |v: Option<f64>, key: &str| self.need(v, "witness", key);
        let r = match name {
            "bcdfm" => RivalStructureSpec::Bcdfm {
                nu1: need(w.nu1, "nu1")?,
                nu2: need(w.nu2, "nu2")?,
                p_tilde: need(w.p_tilde, "p_tilde")?,
                q_tilde: need(w.q_tilde, "q_tilde")?,
                a_tilde: need(w.a_tilde, "a_tilde")?,
            },
            "bcm" => RivalStructureSpec::Bcm {
                nu: need(w.nu, "nu")?,
                beta: need(w.beta, "beta")?,
                l: need(w.bcm_l, "bcm_l")?,
                g: need(w.g, "g")?,
            },
            "hh" => RivalStructureSpec::HhGrowth { l: need(w.l, "l")? },
            other => return Err(self.err("witness", None, format!("unknown rival structure `{other}`"))),
        };
        self.at(r.validate(), "witness")?;
        Ok(r)
    }

    pub fn lavrentiev(&self) -> Result<(LavrentievConfig, &LavrentievSection)> {
        let s = self.section(&self.lavrentiev, "lavrentiev")?;
        let mut cfg = LavrentievConfig::new(s.meshes.clone(), self.seed());
        if let Some(v) = s.lo {
            cfg.lo = v;
        }
        if let Some(v) = s.hi {
            cfg.hi = v;
        }
        if let Some(v) = s.eps_factor {
            cfg.eps_factor = v;
        }
        if let Some(v) = s.grad_tol {
            cfg.solver.grad_tol = v;
        }
        if let Some(v) = s.max_iter {
            cfg.solver.max_iter = v;
        }
        Ok((cfg, s))
    }

    pub fn boundary_datum(&self) -> Result<TestField> {
        let s = self.section(&self.lavrentiev, "lavrentiev")?;
        match s.boundary.as_deref().unwrap_or("saddle") {
            "saddle" => Ok(TestField::Saddle),
            "field" => self.test_field(),
            other => Err(self.err(
                "lavrentiev",
                Some("boundary"),
                format!("unknown boundary datum `{other}`; expected saddle or field"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let text = "[density]\nkind = \"zhikov\"\np = 2.0\nq = = 3\n";
        match ExperimentConfig::parse(text) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_line() {
        let text = "[density]\nkind = \"zhikov\"\np = 2.0\n\n[weight]\nkind = \"step\"\nrr = 1\n";
        match ExperimentConfig::parse(text) {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, 7);
                assert!(message.contains("rr"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_point_at_the_section() {
        let text = "[density]\nkind = \"zhikov\"\np = 2.0\nq = 2.5\n\n[weight]\nkind = \"step\"\nr = 0.5\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        match cfg.density() {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("sigma"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constants_default_to_weight_closed_form() {
        let text = "[density]\nkind = \"zhikov\"\np = 2.0\nq = 2.5\n[weight]\nkind = \"step\"\nr = 0.5\nsigma = 1.0\nh = 0.2\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let c = cfg.constants().unwrap();
        assert!((c.k1 - 2.8).abs() < 1e-12 && (c.k2 - 2.8).abs() < 1e-12 && c.k3 == 0.0);
        assert_eq!(cfg.with_seed(Some(9)).seed(), 9);
    }

    #[test]
    fn digest_depends_on_text_only() {
        let a = ExperimentConfig::parse("[sampler]\nseed = 1\n").unwrap();
        let b = ExperimentConfig::parse("[sampler]\nseed = 1\n").unwrap();
        let c = ExperimentConfig::parse("[sampler]\nseed = 2\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
