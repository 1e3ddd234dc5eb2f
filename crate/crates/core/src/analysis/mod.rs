//! Weight-divergence analysis: closed-form bounds for both aggregation
//! rules, Monte-Carlo estimates of the divergences they bound, and the
//! constants the bounds need.

mod bounds;
mod constants;
mod montecarlo;

pub use bounds::{theorem_gap_lower, zeta_bound_dds, zeta_bound_gomore, BoundConstants};
pub use constants::{estimate_constants, EstimatedConstants, DEFAULT_SAFETY_FACTOR};
pub use montecarlo::{
    divergence_trials, estimate_divergence_mc, estimate_divergence_paired, DivergenceEstimate,
    PairedDivergence, TrialDivergence,
};
