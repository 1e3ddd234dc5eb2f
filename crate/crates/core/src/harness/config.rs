//! Experiment configuration, stored as TOML. Keys carry their units
//! (`bandwidth_hz`, `transmit_power_dbm`, ...) because unit slips are the
//! easiest way to get the outage probabilities wrong.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::aggregation::StrategyId;
use crate::channel::{db_to_linear, dbm_to_watts, RadioConstants};
use crate::error::{Error, Result};
use crate::learner::Activation;
use crate::types::HyperParams;

/// Environment variable overriding `data.dir`.
pub const DATA_DIR_ENV: &str = "GOMORE_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub radio: RadioConfig,
    pub geometry: GeometryConfig,
    pub model: ModelConfig,
    pub training: HyperParams,
    pub data: DataConfig,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    pub transmit_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_per_hz: f64,
    /// Power gain at the reference distance.
    pub ref_gain_db: f64,
    pub pathloss_exponent: f64,
    pub payload_bits: f64,
    pub delay_s: f64,
    /// Fixed decoding threshold. When absent the threshold follows from the
    /// rate budget `payload_bits / (bandwidth_hz · delay_s)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_threshold_db: Option<f64>,
}

impl RadioConfig {
    pub fn constants(&self) -> RadioConstants {
        RadioConstants {
            transmit_power_w: dbm_to_watts(self.transmit_power_dbm),
            bandwidth_hz: self.bandwidth_hz,
            noise_density_w_per_hz: dbm_to_watts(self.noise_density_dbm_per_hz),
            ref_gain: db_to_linear(self.ref_gain_db),
            pathloss_exp: self.pathloss_exponent,
            snr_threshold: self.snr_threshold_db.map(db_to_linear),
            payload_bits: self.payload_bits,
            delay_s: self.delay_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Evenly spaced on `[min_distance_m, max_distance_m]`.
    Uniform,
    /// Uniform random on `[min_distance_m, max_distance_m]`, seeded.
    Random,
    /// `distances_m` given explicitly.
    Explicit,
    /// Channel statistics `lambdas` given directly.
    Lambdas,
    /// Error-free probabilities `fixed_probs` given directly and held
    /// constant for every N.
    FixedProbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub devices: usize,
    pub layout: Layout,
    #[serde(default = "default_min_distance")]
    pub min_distance_m: f64,
    #[serde(default = "default_max_distance")]
    pub max_distance_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances_m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_probs: Option<Vec<f64>>,
}

fn default_min_distance() -> f64 {
    100.0
}

fn default_max_distance() -> f64 {
    500.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Mlp,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: ModelFamily,
    /// Hidden-layer widths of the MLP; input and output widths come from
    /// the dataset.
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Parameter dimension of the quadratic surrogate.
    #[serde(default = "default_quadratic_dim")]
    pub quadratic_dim: usize,
    /// Standard deviation of the quadratic device centers.
    #[serde(default = "default_center_spread")]
    pub center_spread: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}

fn default_quadratic_dim() -> usize {
    10
}

fn default_center_spread() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Mnist,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionScheme {
    Iid,
    Shards,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StorageMode {
    #[default]
    Dense,
    Bytes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub features: usize,
    pub samples: usize,
    pub spread: f64,
    pub holdout_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            classes: 10,
            features: 20,
            samples: 10_000,
            spread: 1.0,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default = "default_data_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub storage: StorageMode,
    pub partition: PartitionScheme,
    #[serde(default = "default_shards")]
    pub shards_per_device: usize,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data/mnist-subset")
}

fn default_shards() -> usize {
    2
}

/// Number of participating devices: fixed, or chosen by the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Participation {
    Auto,
    Fixed(usize),
}

impl Serialize for Participation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Participation::Auto => s.serialize_str("auto"),
            Participation::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Participation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(Participation::Fixed(n as usize)),
            Raw::Word(w) if w == "auto" => Ok(Participation::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "participating must be an integer or \"auto\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub participating: Participation,
    pub strategies: Vec<StrategyId>,
    pub seed: u64,
    #[serde(default = "default_one")]
    pub trials: usize,
    /// Number of trailing rounds averaged into "final" accuracy and loss.
    #[serde(default = "default_one")]
    pub final_window: usize,
    /// Also train the unselected devices each round to record the distance
    /// of every strategy's aggregate to the ideal one.
    #[serde(default)]
    pub track_divergence: bool,
    /// Wall-clock times make output non-reproducible; off by default.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Probe trajectories used to estimate bound constants for the MLP.
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_one() -> usize {
    1
}

fn default_probes() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PowerDbm,
    NParticipating,
    SnrThresholdDb,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::PowerDbm => "power_dbm",
            SweepAxis::NParticipating => "n_participating",
            SweepAxis::SnrThresholdDb => "snr_threshold_db",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power_dbm" => Ok(SweepAxis::PowerDbm),
            "n_participating" => Ok(SweepAxis::NParticipating),
            "snr_threshold_db" => Ok(SweepAxis::SnrThresholdDb),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
}

impl ExperimentConfig {
    /// K = 20, T = 10, b = 50, η = 0.001, B = 1 MHz, N0 = −174 dBm/Hz,
    /// |h0|² = −30 dB, α = 2.2, non-IID MNIST shards. Power, distances,
    /// payload size, delay budget and round count are plain defaults.
    pub fn defaults() -> Self {
        ExperimentConfig {
            radio: RadioConfig {
                transmit_power_dbm: 20.0,
                bandwidth_hz: 1e6,
                noise_density_dbm_per_hz: -174.0,
                ref_gain_db: -30.0,
                pathloss_exponent: 2.2,
                payload_bits: 1_628_480.0,
                delay_s: 1.6,
                snr_threshold_db: None,
            },
            geometry: GeometryConfig {
                devices: 20,
                layout: Layout::Uniform,
                min_distance_m: 100.0,
                max_distance_m: 500.0,
                distances_m: None,
                lambdas: None,
                fixed_probs: None,
            },
            model: ModelConfig {
                family: ModelFamily::Mlp,
                hidden_layers: vec![64],
                activation: Activation::Relu,
                quadratic_dim: 10,
                center_spread: 1.0,
            },
            training: HyperParams::default(),
            data: DataConfig {
                source: DataSource::Mnist,
                dir: default_data_dir(),
                storage: StorageMode::Dense,
                partition: PartitionScheme::Shards,
                shards_per_device: 2,
                synthetic: SyntheticConfig::default(),
            },
            run: RunConfig {
                participating: Participation::Auto,
                strategies: StrategyId::ALL.to_vec(),
                seed: 1,
                trials: 1,
                final_window: 1,
                track_divergence: false,
                record_wall_time: false,
                probes: 20,
            },
            sweep: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Replaces `data.dir` with `$GOMORE_DATA_DIR` when set.
    pub fn apply_env_overrides(&mut self) {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            self.data.dir = PathBuf::from(dir);
        }
    }

    pub fn num_devices(&self) -> usize {
        self.geometry.devices
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        self.radio
            .constants()
            .validate()
            .map_err(|e| Error::Config(format!("radio: {e}")))?;
        self.training
            .validate()
            .map_err(|e| Error::Config(format!("training: {e}")))?;

        let k = self.geometry.devices;
        if k == 0 {
            return fail("geometry.devices", "must be at least 1".into());
        }
        let g = &self.geometry;
        let list_len = |name: &str, v: &Option<Vec<f64>>| -> Result<()> {
            match v {
                Some(list) if list.len() == k => Ok(()),
                Some(list) => Err(Error::Config(format!(
                    "geometry.{name}: {} entries for {k} devices",
                    list.len()
                ))),
                None => Err(Error::Config(format!(
                    "geometry.{name}: required by layout {:?}",
                    g.layout
                ))),
            }
        };
        match g.layout {
            Layout::Uniform | Layout::Random => {
                if !(g.min_distance_m > 0.0 && g.max_distance_m >= g.min_distance_m) {
                    return fail(
                        "geometry.min_distance_m",
                        "need 0 < min_distance_m <= max_distance_m".into(),
                    );
                }
            }
            Layout::Explicit => {
                list_len("distances_m", &g.distances_m)?;
                if g.distances_m.iter().flatten().any(|d| !(*d > 0.0)) {
                    return fail("geometry.distances_m", "distances must be positive".into());
                }
            }
            Layout::Lambdas => {
                list_len("lambdas", &g.lambdas)?;
                if g.lambdas.iter().flatten().any(|l| !(*l >= 0.0)) {
                    return fail("geometry.lambdas", "values must be >= 0".into());
                }
            }
            Layout::FixedProbs => {
                list_len("fixed_probs", &g.fixed_probs)?;
                if g.fixed_probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
                    return fail("geometry.fixed_probs", "values must lie in [0, 1]".into());
                }
            }
        }

        match self.run.participating {
            Participation::Fixed(n) if n == 0 || n > k => {
                return fail(
                    "run.participating",
                    format!("need 1 <= N <= K = {k}, got {n}"),
                );
            }
            Participation::Auto if g.layout == Layout::FixedProbs => {
                return fail(
                    "run.participating",
                    "\"auto\" needs channel statistics, not fixed probabilities".into(),
                );
            }
            Participation::Auto if self.radio.snr_threshold_db.is_some() => {
                return fail(
                    "run.participating",
                    "\"auto\" needs a rate budget; remove radio.snr_threshold_db".into(),
                );
            }
            _ => {}
        }
        if self.run.strategies.is_empty() {
            return fail("run.strategies", "list at least one strategy".into());
        }
        if self.run.trials == 0 {
            return fail("run.trials", "must be at least 1".into());
        }
        if self.run.final_window == 0 {
            return fail("run.final_window", "must be at least 1".into());
        }

        match self.model.family {
            ModelFamily::Mlp => {
                if self.model.hidden_layers.contains(&0) {
                    return fail("model.hidden_layers", "widths must be >= 1".into());
                }
            }
            ModelFamily::Quadratic => {
                if self.model.quadratic_dim == 0 {
                    return fail("model.quadratic_dim", "must be >= 1".into());
                }
                if !(self.model.center_spread >= 0.0) {
                    return fail("model.center_spread", "must be >= 0".into());
                }
            }
        }
        if self.data.partition == PartitionScheme::Shards && self.data.shards_per_device == 0 {
            return fail("data.shards_per_device", "must be >= 1".into());
        }
        if self.data.source == DataSource::Synthetic {
            let s = &self.data.synthetic;
            if s.classes == 0 || s.features == 0 || s.samples == 0 {
                return fail("data.synthetic", "counts must be positive".into());
            }
            if !(0.0..1.0).contains(&s.holdout_fraction) || s.holdout_fraction == 0.0 {
                return fail("data.synthetic.holdout_fraction", "must be in (0, 1)".into());
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.grid.is_empty() {
                return fail("sweep.grid", "must not be empty".into());
            }
            if sweep.axis == SweepAxis::NParticipating
                && sweep.grid.iter().any(|&v| v < 1.0 || v > k as f64 || v.fract() != 0.0)
            {
                return fail("sweep.grid", format!("participant counts must be integers in [1, {k}]"));
            }
        }
        Ok(())
    }
}
