use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gomore::channel::{error_free_prob_rate, DeviceLink, RadioConstants};
use gomore::harness::config::{DataSource, ModelFamily, PartitionScheme, DATA_DIR_ENV};
use gomore::harness::{self, csv as out_csv, ExperimentConfig, Scenario, SweepAxis};
use gomore::optimizer::optimize_participation;
use gomore::{Error, Result};

#[derive(Parser)]
#[command(name = "gomore", version, about = "Federated learning over lossy wireless uplinks")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GOMORE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write per-round records.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Trial index (selects the partition, initialization and draws).
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run a grid of experiments and write one summary row per point and
    /// strategy.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Overrides `sweep.axis`.
        #[arg(long)]
        axis: Option<String>,
        /// Overrides `sweep.grid`: `a,b,c` or `start:step:stop`.
        #[arg(long)]
        grid: Option<String>,
        /// Overrides `run.trials`.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Evaluate the participant-count objective for N = 1..=K.
    OptimizeN(OptimizeArgs),
    /// Closed-form divergence bounds for every N.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo one-round divergences next to the bounds.
    Divergence {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Participant counts to evaluate (default: all).
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
    },
    /// Write a configuration with the default parameters.
    GenConfig {
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Synthetic Gaussian-cluster data instead of MNIST.
        #[arg(long)]
        synthetic: bool,
        /// Quadratic surrogate model instead of the MLP.
        #[arg(long)]
        quadratic: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Iid,
    Shards,
}

#[derive(Args)]
struct Common {
    #[arg(long, short)]
    config: PathBuf,
    /// Output file (default: standard output).
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    /// MNIST directory; also read from GOMORE_DATA_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Use synthetic data.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, value_enum)]
    partition: Option<PartitionArg>,
    #[arg(long)]
    shards_per_device: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        // An unreadable config file is a config problem, not a runtime one.
        let mut cfg = ExperimentConfig::load(&self.config).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            other => other,
        })?;
        cfg.apply_env_overrides();
        if let Some(dir) = &self.data_dir {
            cfg.data.dir = dir.clone();
        }
        if self.synthetic {
            cfg.data.source = DataSource::Synthetic;
        }
        if let Some(p) = self.partition {
            cfg.data.partition = match p {
                PartitionArg::Iid => PartitionScheme::Iid,
                PartitionArg::Shards => PartitionScheme::Shards,
            };
        }
        if let Some(s) = self.shards_per_device {
            cfg.data.shards_per_device = s;
        }
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(r) = self.rounds {
            cfg.training.rounds = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    k: usize,
    /// Normalized rate requirement d/(B·τ) in bit/s/Hz.
    #[arg(long, conflicts_with_all = ["payload_bits", "delay", "bandwidth"])]
    rho: Option<f64>,
    #[arg(long)]
    payload_bits: Option<f64>,
    /// Delay budget in seconds.
    #[arg(long)]
    delay: Option<f64>,
    /// Bandwidth in Hz.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Device distances in meters.
    #[arg(long, value_delimiter = ',', conflicts_with = "lambda_list")]
    distances: Vec<f64>,
    /// Channel statistics λ_k directly.
    #[arg(long, value_delimiter = ',')]
    lambda_list: Vec<f64>,
    #[arg(long, default_value_t = 20.0)]
    power_dbm: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse grid `{text}`"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let (start, step, stop) = (v[0], v[1], v[2]);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|i| start + i as f64 * step).collect());
    }
    text.split(',')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect()
}

fn optimize_n(args: &OptimizeArgs) -> Result<()> {
    let mut radio = RadioConstants {
        transmit_power_w: gomore::channel::dbm_to_watts(args.power_dbm),
        ..RadioConstants::default()
    };
    if let Some(b) = args.bandwidth {
        radio.bandwidth_hz = b;
    }
    if let Some(d) = args.payload_bits {
        radio.payload_bits = d;
    }
    if let Some(t) = args.delay {
        radio.delay_s = t;
    }
    radio.validate().map_err(|e| Error::Config(e.to_string()))?;
    let rho = args.rho.unwrap_or_else(|| radio.rho());
    let lambdas: Vec<f64> = if !args.lambda_list.is_empty() {
        args.lambda_list.clone()
    } else if !args.distances.is_empty() {
        args.distances
            .iter()
            .map(|&d| DeviceLink::at_distance(d, &radio).map(|l| l.lambda))
            .collect::<Result<_>>()
            .map_err(|e| Error::Config(e.to_string()))?
    } else {
        return Err(Error::Config("give --distances or --lambda-list".into()));
    };
    if lambdas.len() != args.k {
        return Err(Error::Config(format!(
            "--k {} but {} devices listed",
            args.k,
            lambdas.len()
        )));
    }
    let plan = optimize_participation(&lambdas, rho, args.k)
        .map_err(|e| Error::Config(e.to_string()))?;
    let probs: Vec<Vec<f64>> = (1..=args.k)
        .map(|n| lambdas.iter().map(|&l| error_free_prob_rate(l, rho, n)).collect())
        .collect::<Result<_>>()?;
    match &args.out {
        Some(path) => {
            out_csv::write_plan(writer(Some(path))?, &plan, &probs)?;
            println!("best_n={}", plan.best_n);
        }
        None => {
            let mut w = writer(None)?;
            out_csv::write_plan(&mut w, &plan, &probs)?;
            writeln!(w, "# best_n={}", plan.best_n).map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn gen_config(out: Option<&Path>, synthetic: bool, quadratic: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::defaults();
    if synthetic {
        cfg.data.source = DataSource::Synthetic;
    }
    if quadratic {
        cfg.model.family = ModelFamily::Quadratic;
    }
    let text = format!(
        "# Participant count, geometry, transmit power, payload size, delay budget\n\
         # and round count are not fixed by the model; the values below are defaults.\n\
         # Data directory: set data.dir or ${DATA_DIR_ENV}.\n\n{}",
        cfg.to_toml_string()?
    );
    let mut w = writer(out)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(out.unwrap_or(Path::new("<stdout>")), e))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate { common, trial } => {
            let cfg = common.load()?;
            let records = Scenario::prepare(&cfg)?.run_trial(trial)?;
            out_csv::write_records(writer(common.out.as_deref())?, &records)
        }
        Command::Sweep {
            common,
            axis,
            grid,
            trials,
        } => {
            let mut cfg = common.load()?;
            if let Some(t) = trials {
                cfg.run.trials = t;
            }
            let axis = match axis {
                Some(a) => a.parse::<SweepAxis>()?,
                None => cfg.sweep.as_ref().map(|s| s.axis).ok_or_else(|| {
                    Error::Config("no sweep axis: give --axis or a [sweep] section".into())
                })?,
            };
            let grid = match grid {
                Some(g) => parse_grid(&g)?,
                None => cfg.sweep.as_ref().map(|s| s.grid.clone()).ok_or_else(|| {
                    Error::Config("no sweep grid: give --grid or a [sweep] section".into())
                })?,
            };
            if grid.is_empty() {
                return Err(Error::Config("empty sweep grid".into()));
            }
            cfg.sweep = None;
            cfg.validate()?;
            let scenario = Scenario::prepare(&cfg)?;
            let rows = harness::run_sweep(&scenario, axis, &grid)?;
            out_csv::write_sweep(writer(common.out.as_deref())?, &rows)
        }
        Command::OptimizeN(args) => optimize_n(&args),
        Command::Bounds { common } => {
            let cfg = common.load()?;
            let scenario = Scenario::prepare(&cfg)?;
            let ns: Vec<usize> = (1..=scenario.num_devices()).collect();
            let rows = harness::bound_rows(&scenario, &ns, None)?;
            out_csv::write_bounds(writer(common.out.as_deref())?, &rows)
        }
        Command::Divergence { common, trials, n } => {
            let cfg = common.load()?;
            if trials == 0 {
                return Err(Error::Config("--trials must be at least 1".into()));
            }
            let scenario = Scenario::prepare(&cfg)?;
            let ns = if n.is_empty() {
                (1..=scenario.num_devices()).collect()
            } else {
                n
            };
            let rows = harness::bound_rows(&scenario, &ns, Some(trials))?;
            out_csv::write_bounds(writer(common.out.as_deref())?, &rows)
        }
        Command::GenConfig {
            out,
            synthetic,
            quadratic,
        } => gen_config(out.as_deref(), synthetic, quadratic),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
