//! Mollification on grids, energy quadrature, the energy-approximation
//! experiment and a discrete Lavrentiev probe.

mod energy;
mod lavrentiev;
mod mollifier;
mod testfields;

pub use energy::{
    energy, energy_convergence, energy_of_gradient, scalar_truncation_energy_split, ConvergenceConfig,
    ConvergenceTrace, EpsSchedule, FieldSource, TraceRow, TruncationSplit,
};
pub use lavrentiev::{
    lavrentiev_probe, DescentOutcome, IterRecord, LavrentievConfig, LavrentievProbe, LavrentievProbeResult, SolverConfig,
    ROUNDING,
};
pub use mollifier::{
    bump, bump_constant, bump_power_integral, gradient_bound_check, kernel_dual_norm, mollified_gradient, mollify,
    DiscreteKernel, GradientBoundReport, MollifierSpec, GRADIENT_BOUND_SLACK,
};
pub use testfields::TestField;
