use rayon::prelude::*;

use crate::aggregation::{
    aggregate_dds, aggregate_gomore, aggregate_ideal, train_devices, ChannelState, FlContext,
    RoundDraws, StrategyId,
};
use crate::error::{Error, Result};
use crate::rng::{label, RngSpec};
use crate::vector::ParamVector;

/// Sample mean of per-trial squared divergences and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_trials: usize,
}

impl DivergenceEstimate {
    /// Mean and `sample_std / √n` (zero for a single sample). Sums run in
    /// slice order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return DivergenceEstimate {
                mean: f64::NAN,
                std_err: f64::NAN,
                n_trials: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_err = if n > 1 {
            let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        DivergenceEstimate {
            mean,
            std_err,
            n_trials: n,
        }
    }
}

/// Squared distance of each strategy's aggregate to the ideal aggregate in
/// one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialDivergence {
    pub gomore: f64,
    pub dds: f64,
}

/// Runs `n_trials` independent one-round experiments from the common model
/// `w_start`. Every device trains in every trial (the ideal aggregate needs
/// all of them); the selection, reception draws and local models of a trial
/// are shared by both strategies.
pub fn divergence_trials(
    ctx: &FlContext<'_>,
    w_start: &ParamVector,
    channel: &ChannelState,
    n_trials: usize,
    rng: &RngSpec,
) -> Result<Vec<TrialDivergence>> {
    if n_trials == 0 {
        return Err(Error::invalid("n_trials", "must be at least 1"));
    }
    let k = ctx.num_devices();
    if channel.probs.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: channel.probs.len(),
        });
    }
    let devices: Vec<usize> = (0..k).collect();
    (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let stream = rng.derive(&[label::TRIAL, t as u64]);
            let locals = train_devices(ctx, w_start, &devices, 0, &stream)?;
            let ideal = aggregate_ideal(&locals)?;
            let draws = RoundDraws::draw(channel, 0, &stream)?;
            let ids = draws.selected.ids();
            let selected: Vec<ParamVector> = ids.iter().map(|&i| locals[i].clone()).collect();
            let flags = draws.error_free_flags();
            let n = ids.len();
            let gomore = aggregate_gomore(&selected, &flags, w_start, n)?;
            let probs: Vec<f64> = ids.iter().map(|&i| channel.probs[i]).collect();
            let dds = aggregate_dds(&selected, &flags, &probs, n)?;
            Ok(TrialDivergence {
                gomore: gomore.sq_distance(&ideal)?,
                dds: dds.sq_distance(&ideal)?,
            })
        })
        .collect()
}

/// Monte-Carlo estimate of the expected one-round weight divergence of a
/// strategy with respect to ideal aggregation.
pub fn estimate_divergence_mc(
    strategy: StrategyId,
    ctx: &FlContext<'_>,
    w_start: &ParamVector,
    channel: &ChannelState,
    n_trials: usize,
    rng: &RngSpec,
) -> Result<DivergenceEstimate> {
    let trials = divergence_trials(ctx, w_start, channel, n_trials, rng)?;
    let samples: Vec<f64> = match strategy {
        StrategyId::Gomore => trials.iter().map(|t| t.gomore).collect(),
        StrategyId::Dds => trials.iter().map(|t| t.dds).collect(),
        StrategyId::Ideal => {
            return Err(Error::invalid(
                "strategy",
                "divergence is measured against ideal aggregation",
            ))
        }
    };
    Ok(DivergenceEstimate::from_samples(&samples))
}

/// Both strategies from the same trials, plus the paired difference
/// `dds − gomore`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedDivergence {
    pub gomore: DivergenceEstimate,
    pub dds: DivergenceEstimate,
    pub difference: DivergenceEstimate,
}

impl PairedDivergence {
    /// True when DDS exceeds GoMORE by more than `sigmas` paired standard
    /// errors.
    pub fn dds_worse_by(&self, sigmas: f64) -> bool {
        self.difference.mean - sigmas * self.difference.std_err > 0.0
    }
}

pub fn estimate_divergence_paired(
    ctx: &FlContext<'_>,
    w_start: &ParamVector,
    channel: &ChannelState,
    n_trials: usize,
    rng: &RngSpec,
) -> Result<PairedDivergence> {
    let trials = divergence_trials(ctx, w_start, channel, n_trials, rng)?;
    let g: Vec<f64> = trials.iter().map(|t| t.gomore).collect();
    let d: Vec<f64> = trials.iter().map(|t| t.dds).collect();
    let diff: Vec<f64> = trials.iter().map(|t| t.dds - t.gomore).collect();
    Ok(PairedDivergence {
        gomore: DivergenceEstimate::from_samples(&g),
        dds: DivergenceEstimate::from_samples(&d),
        difference: DivergenceEstimate::from_samples(&diff),
    })
}
