//! Sampled structure checks, mollification experiments and counterexample
//! witnesses for nonautonomous double-phase integrands
//! `F(u; Ω) = ∫_Ω f(x, Du(x)) dx` with `(p, q)` growth.
//!
//! * [`fields`]: uniform grids, sampled vector fields, finite-difference
//!   gradients, `L^p` norms and vectorial truncation.
//! * [`densities`]: closed-form weights and densities.
//! * [`conditions`]: falsifiers for the structure conditions, envelope
//!   brackets and the counterexample witnesses.
//! * [`approx`]: mollification, energies, the energy-convergence trace and
//!   the Lavrentiev probe.
//! * [`cli`]: config-driven experiment runner behind the `dphase` binary.

pub mod approx;
pub mod cli;
pub mod conditions;
pub mod densities;
mod error;
pub mod fields;
pub mod sampling;

pub use error::{Error, Result};
