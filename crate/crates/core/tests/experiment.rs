//! Monte Carlo harness: reproducibility, CSV formats and configuration files.

use lebid::estimator::Method;
use lebid::experiment::{
    event_counts, preset_scaled, read_input_csv, read_records_csv, read_signals_csv, run_sweep, simulate_run, write_records_csv,
    write_run_files, write_summary_csv, ExperimentConfig, Scale, BANDS_FILE, EVENTS_FILE, INPUT_FILE, SIGNALS_FILE,
};
use lebid::sampling::read_bands_csv;
use lebid::{preset, run_experiment, summarize, RunOptions};

fn small() -> ExperimentConfig {
    let mut cfg = preset("msd").unwrap();
    cfg.duration = 6.0;
    cfg.n_runs = 3;
    cfg.estimator.hyper.max_iter = 2;
    cfg.estimator.hyper.n_samples = 100;
    cfg.estimator.hyper.burn_in = 10;
    cfg
}

fn records_bytes(cfg: &ExperimentConfig, parallel: bool) -> Vec<u8> {
    let outcome = run_experiment(cfg, RunOptions { parallel, timing: false }).unwrap();
    assert!(outcome.failures.is_empty());
    let mut out = Vec::new();
    write_records_csv(&outcome.records, &mut out).unwrap();
    out
}

#[test]
fn records_are_byte_identical_across_executions() {
    let cfg = small();
    let a = records_bytes(&cfg, false);
    let b = records_bytes(&cfg, false);
    let c = records_bytes(&cfg, true);
    assert_eq!(a, b);
    assert_eq!(a, c);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("seed,method,fit,n_events,gamma_tilde,beta,sigma2,wall_ms"));
    assert_eq!(text.lines().count(), 1 + 3 * 3);
}

#[test]
fn different_seeds_give_different_records() {
    let cfg = small();
    let mut other = cfg.clone();
    other.seed += 100;
    assert_ne!(records_bytes(&cfg, false), records_bytes(&other, false));
}

#[test]
fn records_round_trip_and_summaries() {
    let cfg = small();
    let outcome = run_experiment(&cfg, RunOptions::default()).unwrap();
    let mut bytes = Vec::new();
    write_records_csv(&outcome.records, &mut bytes).unwrap();
    assert_eq!(read_records_csv(bytes.as_slice()).unwrap(), outcome.records);

    let summary = summarize(&outcome.records).unwrap();
    let methods: Vec<Method> = summary.iter().map(|r| r.method).collect();
    assert_eq!(methods, Method::ALL.to_vec());
    for row in &summary {
        assert!(row.min <= row.q1 && row.q1 <= row.median && row.median <= row.q3 && row.q3 <= row.max);
    }
    let mut csv = Vec::new();
    write_summary_csv(&summary, &mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("method,min,q1,median,q3,max,mean_events"));
}

#[test]
fn timing_only_changes_the_wall_clock_column() {
    let mut cfg = small();
    cfg.methods = vec![Method::Riemann];
    let plain = run_experiment(&cfg, RunOptions::default()).unwrap().records;
    let timed = run_experiment(&cfg, RunOptions { parallel: false, timing: true }).unwrap().records;
    assert!(plain.iter().all(|r| r.wall_ms == 0));
    for (a, b) in plain.iter().zip(&timed) {
        assert_eq!((a.seed, a.fit, a.beta), (b.seed, b.fit, b.beta));
    }
}

#[test]
fn sweep_runs_each_threshold() {
    let mut cfg = small();
    cfg.h_sweep = vec![1.0, 2.0];
    cfg.methods = vec![Method::Riemann];
    cfg.n_runs = 2;
    let sweep = run_sweep(&cfg, RunOptions::default()).unwrap();
    assert_eq!(sweep.iter().map(|(h, _)| *h).collect::<Vec<_>>(), vec![1.0, 2.0]);
    let events: Vec<usize> = sweep.iter().map(|(_, o)| o.records[0].n_events).collect();
    assert!(events[0] >= events[1], "coarser thresholds give fewer events");
}

#[test]
fn run_files_round_trip() {
    let cfg = small();
    let data = simulate_run(&cfg, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_files(&data, cfg.delta, dir.path()).unwrap();
    for f in [BANDS_FILE, EVENTS_FILE, INPUT_FILE, SIGNALS_FILE] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let open = |f: &str| std::fs::File::open(dir.path().join(f)).unwrap();
    assert_eq!(read_bands_csv(open(BANDS_FILE), cfg.h).unwrap().levels(), data.dataset.levels());
    assert_eq!(read_input_csv(open(INPUT_FILE), cfg.delta_u).unwrap(), data.input);
    let (x, z) = read_signals_csv(open(SIGNALS_FILE)).unwrap();
    assert_eq!(x, data.noiseless);
    assert_eq!(z, data.noisy[1..].to_vec());
}

#[test]
fn configuration_files() {
    let cfg = preset_scaled("GB", Scale::Full).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gb.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
    assert!(preset("nope").is_err());
    let mut bad = small();
    bad.delta_u = 0.25; // not a multiple of Δ = 0.1
    assert!(bad.validate().is_err());
}

#[test]
fn event_counts_are_seeded() {
    let cfg = small();
    assert_eq!(event_counts(&cfg).unwrap(), event_counts(&cfg).unwrap());
    assert_eq!(event_counts(&cfg).unwrap().len(), cfg.n_runs);
}
