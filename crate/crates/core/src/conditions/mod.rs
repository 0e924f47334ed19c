//! Sampled checks of the structure conditions on a density, plus the
//! constructive witnesses that separate the examples from rival frameworks.
//!
//! A sampled check either finds a violating sample or reports
//! "pass-on-samples"; the latter is evidence, not a proof.

mod envelope;
mod report;
mod structure;
mod witness;

pub use envelope::{
    biconjugate_bracket, check_h_property, convex_hull_1d, essinf_bracket, ConvexHull1d, EnvelopeBracket, HPropertyParams,
    LocalInfimum, DEFAULT_EPS_STAR,
};
pub(crate) use report::join;
pub use report::{ConditionReport, Verdict, Witness, IDENTITY_TOL, ORACLE_TOL};
pub use structure::{
    check_convexity_sampled, check_f1, check_f2_sampled, check_zsigma, f1_margin, f2_sides, find_min_point_f4,
    min_point_candidates, zsigma_sides, MinPointCertificate, StructureConstants, ZsigmaConstants,
};
pub use witness::{
    rival_sides, witness_non_product, witness_non_uhlenbeck, witness_rival_structure_failure, GFact, NonProductTranscript,
    NonUhlenbeckWitness, RivalStructureSpec, RivalWitness, ScanRow, TScan,
};
