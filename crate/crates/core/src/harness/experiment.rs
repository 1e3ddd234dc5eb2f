use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{
    DataSource, ExperimentConfig, Layout, ModelFamily, Participation, PartitionScheme, StorageMode,
};
use crate::aggregation::{
    aggregate_ideal, aggregate_with, train_devices, ChannelState, FlContext, RoundDraws,
    StrategyId,
};
use crate::channel::{link_probabilities, DeviceLink, RadioConstants};
use crate::data::{
    load_mnist_dir, partition_iid, partition_noniid_shards, split_holdout,
    synth_gaussian_clusters, DevicePartition, LabeledDataset, Storage,
};
use crate::error::{Error, Result};
use crate::learner::{evaluate, MlpSpec, ModelSpec, QuadraticSpec};
use crate::optimizer::{optimize_participation, ActivationPlan};
use crate::rng::{label, RngSpec};
use crate::vector::ParamVector;

/// One row of a run: the state of one strategy after one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub round: usize,
    pub strategy: StrategyId,
    pub test_accuracy: Option<f64>,
    pub test_loss: f64,
    /// Uploads used this round: all K for ideal aggregation, the error-free
    /// selected uploads otherwise.
    pub n_error_free: usize,
    /// Squared distance to the ideal aggregate computed from the same
    /// starting model; present only when divergence tracking is on.
    pub divergence_sample: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Loads or generates the datasets a configuration asks for. Quadratic
/// runs need none.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Option<Datasets>> {
    if cfg.model.family == ModelFamily::Quadratic {
        return Ok(None);
    }
    match cfg.data.source {
        DataSource::Mnist => {
            let storage = match cfg.data.storage {
                StorageMode::Dense => Storage::Dense,
                StorageMode::Bytes => Storage::Bytes,
            };
            let split = load_mnist_dir(&cfg.data.dir, storage)?;
            Ok(Some(Datasets {
                train: split.train,
                test: split.test,
            }))
        }
        DataSource::Synthetic => {
            let s = &cfg.data.synthetic;
            let stream = RngSpec::new(cfg.run.seed).derive(&[label::DATA]);
            let all = synth_gaussian_clusters(s.classes, s.features, s.samples, s.spread, &stream)?;
            let (train, test) = split_holdout(&all, s.holdout_fraction, &stream.derive(&[1]))?;
            Ok(Some(Datasets { train, test }))
        }
    }
}

/// A configuration with its data loaded and its fixed randomness (device
/// placement, quadratic centers) resolved. Per-trial randomness (partition,
/// initialization, rounds) is derived in [`Scenario::run_trial`].
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ExperimentConfig,
    pub radio: RadioConstants,
    /// Empty for the fixed-probability layout.
    pub links: Vec<DeviceLink>,
    pub model: ModelSpec,
    pub data: Option<Arc<Datasets>>,
}

impl Scenario {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let data = load_datasets(cfg)?.map(Arc::new);
        Self::with_data(cfg, data)
    }

    /// Builds a scenario around already loaded data.
    pub fn with_data(cfg: &ExperimentConfig, data: Option<Arc<Datasets>>) -> Result<Self> {
        cfg.validate()?;
        let radio = cfg.radio.constants();
        let master = RngSpec::new(cfg.run.seed);
        let k = cfg.geometry.devices;
        let g = &cfg.geometry;
        let links = match g.layout {
            Layout::Uniform => (0..k)
                .map(|i| {
                    let t = if k == 1 { 0.0 } else { i as f64 / (k - 1) as f64 };
                    DeviceLink::at_distance(g.min_distance_m + t * (g.max_distance_m - g.min_distance_m), &radio)
                })
                .collect::<Result<Vec<_>>>()?,
            Layout::Random => {
                let mut rng = master.derive(&[label::GEOMETRY]).rng();
                (0..k)
                    .map(|_| {
                        let d = if g.max_distance_m > g.min_distance_m {
                            rng.gen_range(g.min_distance_m..g.max_distance_m)
                        } else {
                            g.min_distance_m
                        };
                        DeviceLink::at_distance(d, &radio)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            Layout::Explicit => g
                .distances_m
                .iter()
                .flatten()
                .map(|&d| DeviceLink::at_distance(d, &radio))
                .collect::<Result<Vec<_>>>()?,
            Layout::Lambdas => g
                .lambdas
                .iter()
                .flatten()
                .map(|&l| DeviceLink::from_lambda(l))
                .collect::<Result<Vec<_>>>()?,
            Layout::FixedProbs => Vec::new(),
        };

        let model = match cfg.model.family {
            ModelFamily::Quadratic => {
                let dim = cfg.model.quadratic_dim;
                let mut rng = master.derive(&[label::CENTERS]).rng();
                let centers = (0..k)
                    .map(|_| {
                        ParamVector::new(
                            (0..dim)
                                .map(|_| {
                                    let z: f64 = StandardNormal.sample(&mut rng);
                                    cfg.model.center_spread * z
                                })
                                .collect(),
                        )
                    })
                    .collect();
                ModelSpec::Quadratic(QuadraticSpec::new(centers)?)
            }
            ModelFamily::Mlp => {
                let d = data
                    .as_ref()
                    .ok_or_else(|| Error::Config("model.family = \"mlp\" needs a dataset".into()))?;
                let mut layers = vec![d.train.n_features()];
                layers.extend(&cfg.model.hidden_layers);
                layers.push(d.train.n_classes().max(d.test.n_classes()));
                ModelSpec::Mlp(MlpSpec::new(layers, cfg.model.activation)?)
            }
        };
        if let Some(d) = &data {
            if d.train.len() < k {
                return Err(Error::Config(format!(
                    "{} training samples cannot be spread over {k} devices",
                    d.train.len()
                )));
            }
        }

        Ok(Scenario {
            config: cfg.clone(),
            radio,
            links,
            model,
            data,
        })
    }

    /// Same data, different configuration. The data section of `cfg` is
    /// assumed to match the one the data was loaded for.
    pub fn reconfigure(&self, cfg: &ExperimentConfig) -> Result<Self> {
        Self::with_data(cfg, self.data.clone())
    }

    pub fn num_devices(&self) -> usize {
        self.config.geometry.devices
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.lambda).collect()
    }

    /// Planner output for the rate-budget channel.
    pub fn activation_plan(&self) -> Result<ActivationPlan> {
        if self.config.geometry.layout == Layout::FixedProbs {
            return Err(Error::Config("the planner needs channel statistics".into()));
        }
        optimize_participation(&self.lambdas(), self.radio.rho(), self.num_devices())
    }

    pub fn participants(&self) -> Result<usize> {
        match self.config.run.participating {
            Participation::Fixed(n) => Ok(n),
            Participation::Auto => Ok(self.activation_plan()?.best_n),
        }
    }

    /// Error-free probability of every device when `n` participate.
    pub fn probabilities(&self, n: usize) -> Result<Vec<f64>> {
        match &self.config.geometry.fixed_probs {
            Some(p) if self.config.geometry.layout == Layout::FixedProbs => Ok(p.clone()),
            _ => link_probabilities(&self.radio, &self.links, n),
        }
    }

    pub fn channel(&self) -> Result<ChannelState> {
        let n = self.participants()?;
        Ok(ChannelState {
            probs: self.probabilities(n)?,
            n_active: n,
        })
    }

    pub fn trial_stream(&self, trial: usize) -> RngSpec {
        RngSpec::new(self.config.run.seed).derive(&[label::TRIAL, trial as u64])
    }

    pub fn partitions(&self, trial: usize) -> Result<Vec<DevicePartition>> {
        let k = self.num_devices();
        let Some(d) = &self.data else {
            return Ok((0..k).map(DevicePartition::empty).collect());
        };
        let stream = self.trial_stream(trial).derive(&[label::PARTITION]);
        match self.config.data.partition {
            PartitionScheme::Iid => partition_iid(&d.train, k, &stream),
            PartitionScheme::Shards => {
                partition_noniid_shards(&d.train, k, self.config.data.shards_per_device, &stream)
            }
        }
    }

    pub fn initial_params(&self, trial: usize) -> ParamVector {
        self.model
            .init_params(&self.trial_stream(trial).derive(&[label::INIT]))
    }

    pub fn context<'a>(&'a self, partitions: &'a [DevicePartition]) -> FlContext<'a> {
        FlContext {
            model: &self.model,
            partitions,
            train: self.data.as_deref().map(|d| &d.train),
            hp: self.config.training,
        }
    }

    /// Runs every configured strategy for `training.rounds` rounds. Each
    /// strategy follows its own trajectory, but all of them see the same
    /// selection, reception draws and mini-batch streams in a given round.
    pub fn run_trial(&self, trial: usize) -> Result<Vec<RunRecord>> {
        let k = self.num_devices();
        let channel = self.channel()?;
        let strategies = dedup(&self.config.run.strategies);
        if strategies.contains(&StrategyId::Dds) {
            if let Some(p) = channel.probs.iter().position(|&p| p == 0.0) {
                return Err(Error::Config(format!(
                    "device {p} never gets through (p = 0), so DDS is undefined; \
                     lower the participant count or raise the power"
                )));
            }
        }
        let partitions = self.partitions(trial)?;
        let ctx = self.context(&partitions);
        let stream = self.trial_stream(trial);
        let test = self.data.as_deref().map(|d| &d.test);
        let track = self.config.run.track_divergence;
        let timed = self.config.run.record_wall_time;
        let all: Vec<usize> = (0..k).collect();

        let w0 = self.initial_params(trial);
        let mut globals: Vec<ParamVector> = vec![w0; strategies.len()];
        let mut records = Vec::with_capacity(self.config.training.rounds * strategies.len());
        for round in 0..self.config.training.rounds {
            let draws = RoundDraws::draw(&channel, round, &stream)?;
            let selected = draws.selected.ids();
            for (s, global) in strategies.iter().zip(globals.iter_mut()) {
                let start = Instant::now();
                let full = *s == StrategyId::Ideal || track;
                let devices = if full { &all[..] } else { selected };
                let locals = train_devices(&ctx, global, devices, round, &stream)?;
                let selected_locals: Vec<ParamVector> = if full {
                    selected.iter().map(|&i| locals[i].clone()).collect()
                } else {
                    locals.clone()
                };
                let next = aggregate_with(
                    *s,
                    &draws,
                    &selected_locals,
                    full.then_some(&locals[..]),
                    &channel,
                    global,
                )?;
                if !next.is_finite() {
                    return Err(Error::Divergence(format!(
                        "{s} aggregate became non-finite in round {round}"
                    )));
                }
                let divergence_sample = match (*s, track) {
                    (_, false) => None,
                    (StrategyId::Ideal, true) => Some(0.0),
                    (_, true) => Some(next.sq_distance(&aggregate_ideal(&locals)?)?),
                };
                let eval = evaluate(&self.model, &next, test)?;
                *global = next;
                records.push(RunRecord {
                    round,
                    strategy: *s,
                    test_accuracy: eval.accuracy,
                    test_loss: eval.mean_loss,
                    n_error_free: if *s == StrategyId::Ideal { k } else { draws.n_error_free() },
                    divergence_sample,
                    wall_time: if timed { start.elapsed().as_secs_f64() } else { 0.0 },
                });
            }
        }
        Ok(records)
    }
}

fn dedup(strategies: &[StrategyId]) -> Vec<StrategyId> {
    let mut out: Vec<StrategyId> = Vec::new();
    for &s in strategies {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Trial 0 of the configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    Scenario::prepare(cfg)?.run_trial(0)
}

/// Accuracy and loss averaged over the last `window` rounds of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalMetric {
    pub strategy: StrategyId,
    pub accuracy: Option<f64>,
    pub loss: f64,
}

pub fn final_metrics(records: &[RunRecord], window: usize) -> Vec<FinalMetric> {
    let mut strategies: Vec<StrategyId> = Vec::new();
    for r in records {
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
    }
    let last_round = records.iter().map(|r| r.round).max().unwrap_or(0);
    let first = (last_round + 1).saturating_sub(window.max(1));
    strategies
        .into_iter()
        .map(|s| {
            let tail: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.strategy == s && r.round >= first)
                .collect();
            let n = tail.len() as f64;
            let accuracy = tail
                .iter()
                .map(|r| r.test_accuracy)
                .sum::<Option<f64>>()
                .map(|a| a / n);
            FinalMetric {
                strategy: s,
                accuracy,
                loss: tail.iter().map(|r| r.test_loss).sum::<f64>() / n,
            }
        })
        .collect()
}
