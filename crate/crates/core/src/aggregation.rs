//! Server-side aggregation rules and the per-round orchestration.
//!
//! Three rules are provided: the ideal full-participation average, direct
//! discarding (DDS, erroneous uploads are dropped and the received ones are
//! inverse-probability weighted) and global model reuse (GoMORE, every
//! erroneous upload is replaced by the previous global model).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::sample_error_events;
use crate::data::{DevicePartition, LabeledDataset};
use crate::error::{Error, Result};
use crate::learner::{local_update, ModelSpec};
use crate::rng::{label, RngSpec};
use crate::types::{HyperParams, SelectionSet};
use crate::vector::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyId {
    Ideal,
    Dds,
    Gomore,
}

impl StrategyId {
    pub const ALL: [StrategyId; 3] = [StrategyId::Ideal, StrategyId::Dds, StrategyId::Gomore];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Ideal => "ideal",
            StrategyId::Dds => "dds",
            StrategyId::Gomore => "gomore",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ideal" => Ok(StrategyId::Ideal),
            "dds" => Ok(StrategyId::Dds),
            "gomore" => Ok(StrategyId::Gomore),
            other => Err(Error::invalid("strategy", format!("unknown strategy `{other}`"))),
        }
    }
}

/// Uniform sampling of `n` out of `k` devices without replacement.
pub fn select_devices(k: usize, n: usize, rng: &RngSpec) -> Result<SelectionSet> {
    if n == 0 || n > k {
        return Err(Error::invalid(
            "n_participating",
            format!("need 1 <= N <= K, got N = {n}, K = {k}"),
        ));
    }
    let ids = index::sample(&mut rng.rng(), k, n).into_vec();
    SelectionSet::new(ids, k)
}

fn check_same_dim(locals: &[ParamVector]) -> Result<usize> {
    let dim = locals
        .first()
        .ok_or_else(|| Error::invalid("locals", "no local models"))?
        .dim();
    for l in locals {
        if l.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: l.dim(),
            });
        }
    }
    Ok(dim)
}

/// Plain average over all devices.
pub fn aggregate_ideal(locals: &[ParamVector]) -> Result<ParamVector> {
    let dim = check_same_dim(locals)?;
    let mut out = ParamVector::zeros(dim);
    for l in locals {
        out.axpy_in_place(1.0, l)?;
    }
    out.scale(1.0 / locals.len() as f64);
    Ok(out)
}

/// `Σ_{k received} w_k / (N·p_k)`. `locals`, `error_free` and `probs` are
/// aligned with the selection. A round in which every upload failed yields
/// the zero vector.
pub fn aggregate_dds(
    locals: &[ParamVector],
    error_free: &[bool],
    probs: &[f64],
    n: usize,
) -> Result<ParamVector> {
    let dim = check_same_dim(locals)?;
    if error_free.len() != locals.len() || probs.len() != locals.len() {
        return Err(Error::DimensionMismatch {
            expected: locals.len(),
            got: error_free.len().min(probs.len()),
        });
    }
    if n == 0 {
        return Err(Error::invalid("n_participating", "must be at least 1"));
    }
    for (i, &p) in probs.iter().enumerate() {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::invalid(
                "probs",
                format!("direct discarding needs 0 < p_k <= 1, got {p} at position {i}"),
            ));
        }
    }
    let mut out = ParamVector::zeros(dim);
    for ((l, &ok), &p) in locals.iter().zip(error_free).zip(probs) {
        if ok {
            out.axpy_in_place(1.0 / p, l)?;
        }
    }
    out.scale(1.0 / n as f64);
    Ok(out)
}

/// `(1/N)·Σ_{k selected} ŵ_k` with `ŵ_k = w_k` when received and
/// `ŵ_k = w_prev` otherwise.
pub fn aggregate_gomore(
    locals: &[ParamVector],
    error_free: &[bool],
    w_prev: &ParamVector,
    n: usize,
) -> Result<ParamVector> {
    let dim = check_same_dim(locals)?;
    if w_prev.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: w_prev.dim(),
        });
    }
    if error_free.len() != locals.len() {
        return Err(Error::DimensionMismatch {
            expected: locals.len(),
            got: error_free.len(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("n_participating", "must be at least 1"));
    }
    let mut out = ParamVector::zeros(dim);
    for (l, &ok) in locals.iter().zip(error_free) {
        out.axpy_in_place(1.0, if ok { l } else { w_prev })?;
    }
    out.scale(1.0 / n as f64);
    Ok(out)
}

/// What a device trains on.
#[derive(Debug, Clone, Copy)]
pub struct FlContext<'a> {
    pub model: &'a ModelSpec,
    pub partitions: &'a [DevicePartition],
    pub train: Option<&'a LabeledDataset>,
    pub hp: HyperParams,
}

impl FlContext<'_> {
    pub fn num_devices(&self) -> usize {
        self.partitions.len()
    }
}

/// Channel statistics for one round: error-free probability per device
/// (indexed by device id) and the number of participants they assume.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub probs: Vec<f64>,
    pub n_active: usize,
}

/// Selection and reception draws of one round. Both come from their own
/// substreams, so every strategy sees the same draws.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundDraws {
    pub selected: SelectionSet,
    pub error_free: BTreeMap<usize, bool>,
}

impl RoundDraws {
    pub fn draw(channel: &ChannelState, round: usize, rng: &RngSpec) -> Result<Self> {
        let k = channel.probs.len();
        let selected = select_devices(k, channel.n_active, &rng.derive(&[label::SELECT, round as u64]))?;
        let probs: Vec<f64> = selected.ids().iter().map(|&i| channel.probs[i]).collect();
        let error_free = sample_error_events(&probs, &selected, &rng.derive(&[label::ERRORS, round as u64]))?;
        Ok(RoundDraws {
            selected,
            error_free,
        })
    }

    pub fn error_free_flags(&self) -> Vec<bool> {
        self.selected.ids().iter().map(|i| self.error_free[i]).collect()
    }

    pub fn n_error_free(&self) -> usize {
        self.error_free.values().filter(|&&ok| ok).count()
    }
}

/// Local models for `devices`, trained from `w` with per-(round, device)
/// batch streams. Runs in parallel; the result is in `devices` order and
/// identical to a serial run.
pub fn train_devices(
    ctx: &FlContext<'_>,
    w: &ParamVector,
    devices: &[usize],
    round: usize,
    rng: &RngSpec,
) -> Result<Vec<ParamVector>> {
    devices
        .par_iter()
        .map(|&k| {
            let part = ctx
                .partitions
                .get(k)
                .ok_or_else(|| Error::invalid("device", format!("no partition for device {k}")))?;
            let stream = rng.derive(&[label::BATCH, round as u64, k as u64]);
            local_update(ctx.model, w, part, ctx.train, &ctx.hp, &stream)
        })
        .collect()
}

/// Aggregates with one rule given the selected devices' locals.
pub fn aggregate_with(
    strategy: StrategyId,
    draws: &RoundDraws,
    selected_locals: &[ParamVector],
    all_locals: Option<&[ParamVector]>,
    channel: &ChannelState,
    w_prev: &ParamVector,
) -> Result<ParamVector> {
    let n = draws.selected.len();
    match strategy {
        StrategyId::Ideal => aggregate_ideal(
            all_locals.ok_or_else(|| Error::invalid("locals", "ideal aggregation needs all devices"))?,
        ),
        StrategyId::Dds => {
            let probs: Vec<f64> = draws.selected.ids().iter().map(|&i| channel.probs[i]).collect();
            aggregate_dds(selected_locals, &draws.error_free_flags(), &probs, n)
        }
        StrategyId::Gomore => aggregate_gomore(selected_locals, &draws.error_free_flags(), w_prev, n),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    pub round: usize,
    pub global: ParamVector,
}

/// Record of one round evaluated under several strategies from the same
/// global model.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    pub selected: SelectionSet,
    pub error_free: BTreeMap<usize, bool>,
    /// Post-training local models keyed by device id.
    pub locals: BTreeMap<usize, ParamVector>,
    pub aggregate: BTreeMap<StrategyId, ParamVector>,
}

/// One round: select, train, draw receptions, aggregate under each strategy.
/// All strategies share the selection, the reception events and the local
/// models.
pub fn run_round(
    ctx: &FlContext<'_>,
    state: &RoundState,
    strategies: &[StrategyId],
    channel: &ChannelState,
    rng: &RngSpec,
) -> Result<RoundOutcome> {
    let k = ctx.num_devices();
    if channel.probs.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: channel.probs.len(),
        });
    }
    if state.global.dim() != ctx.model.param_count() {
        return Err(Error::DimensionMismatch {
            expected: ctx.model.param_count(),
            got: state.global.dim(),
        });
    }
    let draws = RoundDraws::draw(channel, state.round, rng)?;
    let need_all = strategies.contains(&StrategyId::Ideal);
    let devices: Vec<usize> = if need_all {
        (0..k).collect()
    } else {
        draws.selected.ids().to_vec()
    };
    let trained = train_devices(ctx, &state.global, &devices, state.round, rng)?;
    let locals: BTreeMap<usize, ParamVector> = devices.into_iter().zip(trained).collect();
    let selected_locals: Vec<ParamVector> =
        draws.selected.ids().iter().map(|i| locals[i].clone()).collect();
    let all_locals: Option<Vec<ParamVector>> = need_all.then(|| locals.values().cloned().collect());

    let mut aggregate = BTreeMap::new();
    for &s in strategies {
        let agg = aggregate_with(
            s,
            &draws,
            &selected_locals,
            all_locals.as_deref(),
            channel,
            &state.global,
        )?;
        aggregate.insert(s, agg);
    }
    Ok(RoundOutcome {
        round: state.round,
        selected: draws.selected,
        error_free: draws.error_free,
        locals,
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::QuadraticSpec;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    #[test]
    fn select_full_and_invalid() {
        let s = select_devices(5, 5, &RngSpec::new(1)).unwrap();
        assert_eq!(s.ids(), &[0, 1, 2, 3, 4]);
        assert!(select_devices(5, 0, &RngSpec::new(1)).is_err());
        assert!(select_devices(5, 6, &RngSpec::new(1)).is_err());
    }

    #[test]
    fn select_single_device_frequencies() {
        let root = RngSpec::new(17);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for i in 0..n {
            counts[select_devices(4, 1, &root.derive(&[i])).unwrap().ids()[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.004, "{counts:?}");
        }
    }

    #[test]
    fn select_pair_inclusion() {
        let root = RngSpec::new(18);
        let n = 100_000;
        let mut both = 0usize;
        for i in 0..n {
            let s = select_devices(4, 2, &root.derive(&[i])).unwrap();
            both += usize::from(s.contains(1) && s.contains(3));
        }
        assert!((both as f64 / n as f64 - 1.0 / 6.0).abs() < 0.004);
    }

    #[test]
    fn ideal_examples() {
        let v = pv(&[1.5, -2.0]);
        assert_eq!(aggregate_ideal(&[v.clone(), v.clone(), v.clone()]).unwrap(), v);
        assert_eq!(aggregate_ideal(&[pv(&[0.0]), pv(&[2.0])]).unwrap(), pv(&[1.0]));
        let e = |i: usize| {
            let mut x = ParamVector::zeros(3);
            x.as_mut_slice()[i] = 1.0;
            x
        };
        let out = aggregate_ideal(&[e(0), e(1), e(2)]).unwrap();
        for i in 0..3 {
            assert!((out[i] - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(aggregate_ideal(&[pv(&[1.0]), pv(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn dds_examples() {
        let locals = [pv(&[2.0]), pv(&[4.0])];
        assert_eq!(aggregate_dds(&locals, &[true, true], &[1.0, 1.0], 2).unwrap(), pv(&[3.0]));
        let out = aggregate_dds(&[pv(&[7.0]), pv(&[1.0])], &[false, true], &[0.3, 0.5], 2).unwrap();
        assert_eq!(out, pv(&[1.0]));
        assert_eq!(aggregate_dds(&locals, &[false, false], &[0.5, 0.5], 2).unwrap(), pv(&[0.0]));
        assert!(aggregate_dds(&locals, &[true, true], &[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn gomore_examples() {
        let locals = [pv(&[2.0]), pv(&[4.0])];
        let prev = pv(&[0.0]);
        assert_eq!(aggregate_gomore(&locals, &[true, true], &prev, 2).unwrap(), pv(&[3.0]));
        assert_eq!(aggregate_gomore(&locals, &[true, false], &prev, 2).unwrap(), pv(&[1.0]));
        let prev = pv(&[-5.5]);
        assert_eq!(aggregate_gomore(&locals, &[false, false], &prev, 2).unwrap(), prev);
        assert!(aggregate_gomore(&locals, &[true, true], &pv(&[0.0, 1.0]), 2).is_err());
    }

    #[test]
    fn dds_is_unbiased_over_error_draws() {
        let locals = [pv(&[1.0, -2.0]), pv(&[3.0, 0.5]), pv(&[-1.0, 4.0])];
        let probs = [0.3, 0.6, 0.9];
        let sel = SelectionSet::all(3);
        let root = RngSpec::new(5);
        let trials = 100_000;
        let mut sum = [0.0f64; 2];
        let mut sum_sq = [0.0f64; 2];
        for t in 0..trials {
            let ev = sample_error_events(&probs, &sel, &root.derive(&[t])).unwrap();
            let flags: Vec<bool> = ev.values().copied().collect();
            let agg = aggregate_dds(&locals, &flags, &probs, 3).unwrap();
            for i in 0..2 {
                sum[i] += agg[i];
                sum_sq[i] += agg[i] * agg[i];
            }
        }
        let target = aggregate_ideal(&locals).unwrap();
        for i in 0..2 {
            let mean = sum[i] / trials as f64;
            let var = sum_sq[i] / trials as f64 - mean * mean;
            let se = (var / trials as f64).sqrt();
            assert!((mean - target[i]).abs() <= 3.0 * se, "coord {i}: {mean} vs {}", target[i]);
        }
    }

    fn quad_ctx(k: usize) -> (ModelSpec, Vec<DevicePartition>) {
        let centers = (0..k).map(|i| pv(&[i as f64, 1.0 - i as f64])).collect();
        (
            ModelSpec::Quadratic(QuadraticSpec::new(centers).unwrap()),
            (0..k).map(DevicePartition::empty).collect(),
        )
    }

    #[test]
    fn perfect_channel_full_participation_agrees() {
        let (model, parts) = quad_ctx(4);
        let ctx = FlContext {
            model: &model,
            partitions: &parts,
            train: None,
            hp: HyperParams { learning_rate: 0.3, local_epochs: 3, batch_size: 1, rounds: 1 },
        };
        let state = RoundState { round: 0, global: pv(&[0.5, 0.5]) };
        let channel = ChannelState { probs: vec![1.0; 4], n_active: 4 };
        let out = run_round(&ctx, &state, &StrategyId::ALL, &channel, &RngSpec::new(9)).unwrap();
        let ideal = &out.aggregate[&StrategyId::Ideal];
        for s in [StrategyId::Dds, StrategyId::Gomore] {
            let a = &out.aggregate[&s];
            for i in 0..2 {
                assert!((a[i] - ideal[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ideal_ignores_channel() {
        let (model, parts) = quad_ctx(4);
        let ctx = FlContext {
            model: &model,
            partitions: &parts,
            train: None,
            hp: HyperParams { learning_rate: 0.3, local_epochs: 3, batch_size: 1, rounds: 1 },
        };
        let state = RoundState { round: 2, global: pv(&[0.5, 0.5]) };
        let good = ChannelState { probs: vec![1.0; 4], n_active: 2 };
        let bad = ChannelState { probs: vec![0.1; 4], n_active: 2 };
        let a = run_round(&ctx, &state, &[StrategyId::Ideal], &good, &RngSpec::new(1)).unwrap();
        let b = run_round(&ctx, &state, &[StrategyId::Ideal], &bad, &RngSpec::new(2)).unwrap();
        assert_eq!(a.aggregate, b.aggregate);
    }

    #[test]
    fn round_is_reproducible() {
        let (model, parts) = quad_ctx(4);
        let ctx = FlContext {
            model: &model,
            partitions: &parts,
            train: None,
            hp: HyperParams { learning_rate: 0.2, local_epochs: 2, batch_size: 1, rounds: 1 },
        };
        let state = RoundState { round: 1, global: pv(&[0.0, 0.0]) };
        let channel = ChannelState { probs: vec![0.5; 4], n_active: 2 };
        let a = run_round(&ctx, &state, &StrategyId::ALL, &channel, &RngSpec::new(3)).unwrap();
        let b = run_round(&ctx, &state, &StrategyId::ALL, &channel, &RngSpec::new(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.selected.len(), 2);
        assert_eq!(a.error_free.len(), 2);
        assert_eq!(a.locals.len(), 4);
    }

    proptest! {
        #[test]
        fn gomore_is_convex_combination(
            vals in proptest::collection::vec(-100.0f64..100.0, 6),
            prev in proptest::collection::vec(-100.0f64..100.0, 2),
            flags in proptest::collection::vec(any::<bool>(), 3),
        ) {
            let locals: Vec<ParamVector> = vals.chunks(2).map(pv).collect();
            let prev = pv(&prev);
            let agg = aggregate_gomore(&locals, &flags, &prev, 3).unwrap();
            for i in 0..2 {
                let pool = locals.iter().map(|l| l[i]).chain(std::iter::once(prev[i]));
                let lo = pool.clone().fold(f64::INFINITY, f64::min);
                let hi = pool.fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(agg[i] >= lo - 1e-12 && agg[i] <= hi + 1e-12);
            }
        }

        #[test]
        fn certain_reception_makes_strategies_agree(
            vals in proptest::collection::vec(-10.0f64..10.0, 8),
        ) {
            let locals: Vec<ParamVector> = vals.chunks(2).map(pv).collect();
            let flags = [true; 4];
            let d = aggregate_dds(&locals, &flags, &[1.0; 4], 4).unwrap();
            let g = aggregate_gomore(&locals, &flags, &pv(&[0.0, 0.0]), 4).unwrap();
            let i = aggregate_ideal(&locals).unwrap();
            prop_assert_eq!(&d, &i);
            prop_assert_eq!(&g, &i);
        }
    }
}
