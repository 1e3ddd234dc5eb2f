use rayon::prelude::*;

use super::config::{ExperimentConfig, Participation, SweepAxis};
use super::experiment::{final_metrics, RunRecord, Scenario};
use crate::aggregation::StrategyId;
use crate::error::{Error, Result};

/// Summary of one strategy at one grid point, over all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub strategy: StrategyId,
    pub n_participating: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub final_accuracy_mean: Option<f64>,
    /// Sample standard deviation over trials; zero for a single trial.
    pub final_accuracy_std: Option<f64>,
    pub final_loss_mean: f64,
    pub trials: usize,
}

pub fn apply_axis(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    match axis {
        SweepAxis::PowerDbm => out.radio.transmit_power_dbm = value,
        SweepAxis::NParticipating => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!(
                    "n_participating grid values must be positive integers, got {value}"
                )));
            }
            out.run.participating = Participation::Fixed(value as usize);
        }
        SweepAxis::SnrThresholdDb => {
            out.radio.snr_threshold_db = Some(value);
            if out.run.participating == Participation::Auto {
                return Err(Error::Config(
                    "sweeping snr_threshold_db needs a fixed run.participating".into(),
                ));
            }
        }
    }
    out.sweep = None;
    out.validate()?;
    Ok(out)
}

/// Runs every trial at every grid point. Work is spread over (point, trial)
/// pairs; results are collected in grid order, so the output does not depend
/// on the thread count.
pub fn run_sweep_records(
    base: &Scenario,
    axis: SweepAxis,
    grid: &[f64],
) -> Result<Vec<(Scenario, Vec<Vec<RunRecord>>)>> {
    let trials = base.config.run.trials;
    let scenarios: Vec<Scenario> = grid
        .iter()
        .map(|&v| base.reconfigure(&apply_axis(&base.config, axis, v)?))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|i| (0..trials).map(move |t| (i, t)))
        .collect();
    let mut runs: Vec<Vec<RunRecord>> = jobs
        .par_iter()
        .map(|&(i, t)| scenarios[i].run_trial(t))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(scenarios.len());
    for s in scenarios.into_iter().rev() {
        let tail = runs.split_off(runs.len() - trials);
        out.push((s, tail));
    }
    out.reverse();
    Ok(out)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

pub fn summarize(
    axis: SweepAxis,
    value: f64,
    scenario: &Scenario,
    runs: &[Vec<RunRecord>],
) -> Result<Vec<SweepRow>> {
    let n = scenario.participants()?;
    let probs = scenario.probabilities(n)?;
    let p_min = probs.iter().copied().fold(f64::INFINITY, f64::min);
    let p_max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let window = scenario.config.run.final_window;
    let finals: Vec<_> = runs.iter().map(|r| final_metrics(r, window)).collect();
    let strategies: Vec<StrategyId> = finals
        .first()
        .map(|f| f.iter().map(|m| m.strategy).collect())
        .unwrap_or_default();
    Ok(strategies
        .into_iter()
        .map(|s| {
            let per_trial: Vec<_> = finals
                .iter()
                .filter_map(|f| f.iter().find(|m| m.strategy == s).copied())
                .collect();
            let accs: Option<Vec<f64>> = per_trial.iter().map(|m| m.accuracy).collect();
            let losses: Vec<f64> = per_trial.iter().map(|m| m.loss).collect();
            let acc_stats = accs.map(|a| mean_std(&a));
            SweepRow {
                axis,
                value,
                strategy: s,
                n_participating: n,
                p_min,
                p_max,
                final_accuracy_mean: acc_stats.map(|a| a.0),
                final_accuracy_std: acc_stats.map(|a| a.1),
                final_loss_mean: mean_std(&losses).0,
                trials: per_trial.len(),
            }
        })
        .collect())
}

/// Sweep over `grid` along `axis`, `run.trials` trials per point.
pub fn run_sweep(base: &Scenario, axis: SweepAxis, grid: &[f64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for ((scenario, runs), &v) in run_sweep_records(base, axis, grid)?.iter().zip(grid) {
        rows.extend(summarize(axis, v, scenario, runs)?);
    }
    Ok(rows)
}

/// Smallest axis value at which `strategy` reaches `target` mean final
/// accuracy.
pub fn min_axis_reaching(rows: &[SweepRow], strategy: StrategyId, target: f64) -> Option<f64> {
    rows.iter()
        .filter(|r| r.strategy == strategy)
        .filter(|r| r.final_accuracy_mean.is_some_and(|a| a >= target))
        .map(|r| r.value)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
}

/// Power saving of GoMORE over DDS at a target accuracy: the difference of
/// the smallest grid powers at which each reaches it. `None` when either
/// never does.
pub fn power_savings_db(rows: &[SweepRow], target: f64) -> Option<f64> {
    let g = min_axis_reaching(rows, StrategyId::Gomore, target)?;
    let d = min_axis_reaching(rows, StrategyId::Dds, target)?;
    Some(d - g)
}

/// Largest saving over all targets GoMORE attains somewhere on the grid,
/// as `(target, saving_db)`.
pub fn max_power_savings_db(rows: &[SweepRow]) -> Option<(f64, f64)> {
    rows.iter()
        .filter(|r| r.strategy == StrategyId::Gomore)
        .filter_map(|r| r.final_accuracy_mean)
        .filter_map(|t| power_savings_db(rows, t).map(|s| (t, s)))
        .fold(None, |best: Option<(f64, f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })
}
