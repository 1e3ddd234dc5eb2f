use crate::analysis::{
    estimate_constants, estimate_divergence_paired, theorem_gap_lower, zeta_bound_dds,
    zeta_bound_gomore, BoundConstants, EstimatedConstants, DEFAULT_SAFETY_FACTOR,
};
use crate::aggregation::ChannelState;
use crate::error::{Error, Result};
use crate::rng::label;

use super::experiment::Scenario;

/// Bounds, and optionally Monte-Carlo divergences, at one participant count.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub k: usize,
    pub n: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub zeta1_mc: Option<f64>,
    pub zeta1_se: Option<f64>,
    pub zeta1_bound: f64,
    pub zeta2_mc: Option<f64>,
    pub zeta2_se: Option<f64>,
    /// Absent when some device has `p = 0`.
    pub zeta2_bound: Option<f64>,
    /// Absent outside the small-learning-rate regime or when `p = 0`.
    pub gap_lower: Option<f64>,
}

/// Constants for trial 0 of a scenario, from its initial model.
pub fn scenario_constants(scenario: &Scenario) -> Result<EstimatedConstants> {
    let partitions = scenario.partitions(0)?;
    let ctx = scenario.context(&partitions);
    estimate_constants(
        &ctx,
        &scenario.initial_params(0),
        scenario.config.run.probes,
        DEFAULT_SAFETY_FACTOR,
        &scenario.trial_stream(0).derive(&[label::PROBE]),
    )
}

/// One row per entry of `n_values`. With `mc_trials`, one-round divergences
/// from the trial-0 initial model are estimated as well.
pub fn bound_rows(
    scenario: &Scenario,
    n_values: &[usize],
    mc_trials: Option<usize>,
) -> Result<Vec<BoundRow>> {
    let k = scenario.num_devices();
    if k < 2 {
        return Err(Error::Config("bounds need at least two devices".into()));
    }
    let constants = scenario_constants(scenario)?;
    let partitions = scenario.partitions(0)?;
    let ctx = scenario.context(&partitions);
    let w0 = scenario.initial_params(0);
    let hp = scenario.config.training;
    n_values
        .iter()
        .map(|&n| {
            if n == 0 || n > k {
                return Err(Error::Config(format!("participant count {n} outside 1..={k}")));
            }
            let probs = scenario.probabilities(n)?;
            let p_min = probs.iter().copied().fold(f64::INFINITY, f64::min);
            let p_max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let c = BoundConstants {
                gamma_sq: constants.gamma_sq,
                g_sq: constants.g_sq,
                eta: hp.learning_rate,
                local_epochs: hp.local_epochs,
                k,
                n,
                probs: probs.clone(),
            };
            let mut row = BoundRow {
                k,
                n,
                p_min,
                p_max,
                zeta1_mc: None,
                zeta1_se: None,
                zeta1_bound: zeta_bound_gomore(&c)?,
                zeta2_mc: None,
                zeta2_se: None,
                zeta2_bound: zeta_bound_dds(&c).ok(),
                gap_lower: theorem_gap_lower(&c).ok(),
            };
            if let Some(trials) = mc_trials {
                if p_min > 0.0 {
                    let channel = ChannelState { probs, n_active: n };
                    let stream = scenario.trial_stream(0).derive(&[label::TRIAL, n as u64]);
                    let est = estimate_divergence_paired(&ctx, &w0, &channel, trials, &stream)?;
                    row.zeta1_mc = Some(est.gomore.mean);
                    row.zeta1_se = Some(est.gomore.std_err);
                    row.zeta2_mc = Some(est.dds.mean);
                    row.zeta2_se = Some(est.dds.std_err);
                }
            }
            Ok(row)
        })
        .collect()
}
