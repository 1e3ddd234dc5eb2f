use std::path::Path;
use std::process::Command;

use gomore::harness::config::{
    DataSource, Layout, ModelFamily, Participation, PartitionScheme, SyntheticConfig,
};
use gomore::harness::csv::{emit_csv, read_records, write_records};
use gomore::harness::{
    final_metrics, run_experiment, run_sweep, ExperimentConfig, Scenario, SweepAxis,
};
use gomore::StrategyId;

fn quadratic() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults();
    cfg.model.family = ModelFamily::Quadratic;
    cfg.model.quadratic_dim = 4;
    cfg.geometry.devices = 8;
    cfg.run.participating = Participation::Fixed(4);
    cfg.training.learning_rate = 0.05;
    cfg.training.rounds = 10;
    cfg
}

fn synthetic_mlp() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults();
    cfg.data.source = DataSource::Synthetic;
    cfg.data.synthetic = SyntheticConfig {
        classes: 5,
        features: 10,
        samples: 2000,
        spread: 1.5,
        holdout_fraction: 0.2,
    };
    cfg.data.partition = PartitionScheme::Shards;
    cfg.data.shards_per_device = 1;
    cfg.geometry.devices = 10;
    cfg.model.hidden_layers = vec![16];
    cfg.training.learning_rate = 0.05;
    cfg.training.rounds = 30;
    cfg
}

fn csv_bytes(cfg: &ExperimentConfig) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records(&mut buf, &run_experiment(cfg).unwrap()).unwrap();
    buf
}

#[test]
fn reruns_are_byte_identical() {
    let mut cfg = synthetic_mlp();
    cfg.run.track_divergence = true;
    let a = csv_bytes(&cfg);
    assert_eq!(a, csv_bytes(&cfg));
    cfg.run.seed += 1;
    assert_ne!(a, csv_bytes(&cfg));
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = synthetic_mlp();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_experiment(&cfg).unwrap())
    };
    assert_eq!(run(1), run(3));

    let scenario = Scenario::prepare(&quadratic()).unwrap();
    let sweep = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_sweep(&scenario, SweepAxis::PowerDbm, &[0.0, 10.0, 20.0]).unwrap())
    };
    assert_eq!(sweep(1), sweep(4));
}

#[test]
fn csv_round_trip_and_empty_output() {
    let records = run_experiment(&synthetic_mlp()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    emit_csv(&records, &path).unwrap();
    let back = read_records(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in back.iter().zip(&records) {
        assert_eq!((a.round, a.strategy, a.n_error_free), (b.round, b.strategy, b.n_error_free));
        let close = |x: f64, y: f64| (x - y).abs() <= 5e-9 * y.abs().max(f64::MIN_POSITIVE);
        assert!(close(a.test_loss, b.test_loss));
        assert!(close(a.test_accuracy.unwrap(), b.test_accuracy.unwrap()));
    }

    let mut cfg = quadratic();
    cfg.training.rounds = 0;
    emit_csv(&run_experiment(&cfg).unwrap(), &path).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        "round,strategy,test_accuracy,test_loss,n_error_free,divergence_sample,wall_time\n"
    );

    let err = emit_csv(&records, Path::new("/nonexistent-dir/out.csv")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent-dir/out.csv"));
}

#[test]
fn ideal_runs_ignore_the_channel() {
    let mut cfg = synthetic_mlp();
    cfg.run.strategies = vec![StrategyId::Ideal];
    let good = run_experiment(&cfg).unwrap();
    cfg.radio.transmit_power_dbm = -20.0;
    cfg.run.participating = Participation::Fixed(2);
    assert_eq!(good, run_experiment(&cfg).unwrap());
}

#[test]
fn single_point_sweep_matches_run() {
    let mut cfg = quadratic();
    cfg.run.trials = 1;
    let scenario = Scenario::prepare(&cfg).unwrap();
    let rows = run_sweep(&scenario, SweepAxis::PowerDbm, &[cfg.radio.transmit_power_dbm]).unwrap();
    let finals = final_metrics(&run_experiment(&cfg).unwrap(), 1);
    assert_eq!(rows.len(), finals.len());
    for (row, fin) in rows.iter().zip(&finals) {
        assert_eq!(row.strategy, fin.strategy);
        assert_eq!(row.final_loss_mean, fin.loss);
        assert_eq!(row.trials, 1);
    }
}

/// One-sided sign test: P(X ≥ wins) for X ~ Binomial(n, 1/2).
fn sign_test_p(wins: u64, n: u64) -> f64 {
    let choose = |k: u64| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (wins..=n).map(choose).sum::<f64>() / 2f64.powi(n as i32)
}

#[test]
fn sign_test_values() {
    assert!((sign_test_p(9, 10) - 11.0 / 1024.0).abs() < 1e-15);
    assert_eq!(sign_test_p(0, 10), 1.0);
}

/// Ideal ≥ GoMORE ≥ DDS in final accuracy over paired seeds.
#[test]
fn strategy_ordering_over_paired_seeds() {
    let mut cfg = synthetic_mlp();
    cfg.geometry.layout = Layout::FixedProbs;
    cfg.geometry.fixed_probs = Some((0..10).map(|i| 0.3 + 0.07 * i as f64).collect());
    cfg.run.participating = Participation::Fixed(6);
    cfg.run.final_window = 5;
    let scenario = Scenario::prepare(&cfg).unwrap();
    let seeds = 20;
    let (mut ideal_wins, mut gomore_wins) = (0, 0);
    for trial in 0..seeds {
        let fm = final_metrics(&scenario.run_trial(trial).unwrap(), 5);
        let acc = |s| fm.iter().find(|m| m.strategy == s).unwrap().accuracy.unwrap();
        ideal_wins += u64::from(acc(StrategyId::Ideal) >= acc(StrategyId::Gomore));
        gomore_wins += u64::from(acc(StrategyId::Gomore) >= acc(StrategyId::Dds));
    }
    let n = seeds as u64;
    assert!(sign_test_p(ideal_wins, n) < 0.05, "ideal ahead of gomore in {ideal_wins}/{n}");
    assert!(sign_test_p(gomore_wins, n) < 0.05, "gomore ahead of dds in {gomore_wins}/{n}");
}

fn gomore_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gomore"))
}

#[test]
fn cli_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("q.toml");
    let st = gomore_bin()
        .args(["gen-config", "--quadratic", "-o"])
        .arg(&cfg_path)
        .status()
        .unwrap();
    assert!(st.success());
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.model.family, ModelFamily::Quadratic);

    let out = dir.path().join("run.csv");
    let run = |out: &Path| {
        gomore_bin()
            .args(["simulate", "--rounds", "3", "-c"])
            .arg(&cfg_path)
            .arg("-o")
            .arg(out)
            .env("GOMORE_THREADS", "2")
            .status()
            .unwrap()
    };
    assert!(run(&out).success());
    let out2 = dir.path().join("run2.csv");
    assert!(run(&out2).success());
    let text = std::fs::read(&out).unwrap();
    assert_eq!(text, std::fs::read(&out2).unwrap());
    assert_eq!(read_records(&text[..]).unwrap().len(), 9);

    let bounds = gomore_bin().args(["bounds", "-c"]).arg(&cfg_path).output().unwrap();
    assert!(bounds.status.success());
    let text = String::from_utf8(bounds.stdout).unwrap();
    assert!(text.starts_with(
        "K,N,p_min,p_max,zeta1_mc,zeta1_se,zeta1_bound,zeta2_mc,zeta2_se,zeta2_bound,gap_lower\n"
    ));
    assert_eq!(text.lines().count(), 21);

    let div = gomore_bin()
        .args(["divergence", "--trials", "50", "--n", "5,10", "-c"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(div.status.success());
    let text = String::from_utf8(div.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "5");
    assert!(row[4].parse::<f64>().unwrap() >= 0.0);

    let sweep = gomore_bin()
        .args(["sweep", "--axis", "n_participating", "--grid", "2:2:6", "--rounds", "2", "-c"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(sweep.status.success(), "{}", String::from_utf8_lossy(&sweep.stderr));
    assert_eq!(String::from_utf8(sweep.stdout).unwrap().lines().count(), 1 + 3 * 3);
}

#[test]
fn cli_optimize_n() {
    let out = gomore_bin()
        .args(["optimize-n", "--k", "4", "--rho", "0.8", "--lambda-list", "0.02,0.05,0.1,0.2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("N,objective,p_min,p_max\n"));
    assert!(text.trim_end().ends_with("# best_n=4"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let distances: Vec<String> = (0..20).map(|i| format!("{}", 100 + 400 * i / 19)).collect();
    let out = gomore_bin()
        .args(["optimize-n", "--k", "20", "--payload-bits", "1628480", "--delay", "1.6"])
        .args(["--bandwidth", "1e6", "--distances", &distances.join(","), "-o"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let best: usize = stdout.trim().strip_prefix("best_n=").unwrap().parse().unwrap();
    assert!(best > 1 && best < 20);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 21);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // Bad value: config error.
    let bad = dir.path().join("bad.toml");
    let mut cfg = quadratic();
    cfg.run.participating = Participation::Fixed(99);
    std::fs::write(&bad, toml_text(&cfg)).unwrap();
    let out = gomore_bin().args(["simulate", "-c"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.participating"));

    // Missing file and unknown flag: config errors too.
    let out = gomore_bin().args(["simulate", "-c", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = gomore_bin().args(["simulate", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Missing data directory: runtime error.
    let mnist = dir.path().join("mnist.toml");
    std::fs::write(&mnist, toml_text(&ExperimentConfig::defaults())).unwrap();
    let out = gomore_bin()
        .args(["simulate", "-c"])
        .arg(&mnist)
        .env("GOMORE_DATA_DIR", dir.path().join("nowhere"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));

    // Training blow-up: runtime error.
    let mut cfg = quadratic();
    cfg.training.learning_rate = 3.0;
    cfg.training.rounds = 200;
    cfg.model.center_spread = 10.0;
    let div = dir.path().join("div.toml");
    std::fs::write(&div, toml_text(&cfg)).unwrap();
    let out = gomore_bin().args(["simulate", "-c"]).arg(&div).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));

    let out = gomore_bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

fn toml_text(cfg: &ExperimentConfig) -> String {
    cfg.to_toml_string().unwrap()
}
