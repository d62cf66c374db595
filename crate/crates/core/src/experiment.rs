//! Benchmark presets and the seeded Monte Carlo runner.
//!
//! Each run draws a white Gaussian input held by a ZOH, simulates the exact
//! noiseless output on the sensing grid, adds Gaussian noise, Lebesgue-samples
//! the result and runs the requested estimators. Runs are independent and
//! fully determined by `seed + run_index`, so sequential and parallel
//! execution produce identical records.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorConfig, Method};
use crate::lti::{integer_ratio, simulate_zoh, RationalTf, ZohSignal};
use crate::sampling::{sample_events, LebesgueDataset};

/// Salt separating the measurement-noise stream from the input stream.
const NOISE_SALT: u64 = 0x5DEE_CE66_D1CE_5EED;
/// Salt for the Gibbs sampler stream of the hyperparameter EM.
const SAMPLER_SALT: u64 = 0xA076_1D64_78BD_642F;

/// Preset names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 5] = ["msd", "msd_h_sweep", "GA", "GB", "GC"];

/// Threshold values of the h-sweep study.
pub const H_SWEEP: [f64; 6] = [1.0, 1.2, 1.5, 1.8, 2.0, 2.5];

/// Transfer function given by its coefficients (descending powers of `s`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl SystemSpec {
    pub fn transfer_function(&self) -> Result<RationalTf> {
        RationalTf::new(self.num.clone(), self.den.clone())
    }
}

/// Full description of a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: SystemSpec,
    /// Threshold spacing `h`.
    pub h: f64,
    /// When non-empty, the experiment is repeated for each of these `h`.
    #[serde(default)]
    pub h_sweep: Vec<f64>,
    /// Sensing grid period `Δ`.
    pub delta: f64,
    /// Input hold period `Δ_u` (an integer multiple of `Δ`).
    pub delta_u: f64,
    /// Standard deviation of the additive output noise.
    pub sigma_noise: f64,
    /// Standard deviation of the white input sequence.
    pub input_std: f64,
    /// Record length `T`; `T/Δ` must be an integer.
    pub duration: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.transfer_function()?;
        for (name, v) in [
            ("h", self.h),
            ("delta", self.delta),
            ("delta_u", self.delta_u),
            ("duration", self.duration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(h) = self.h_sweep.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::invalid(format!("sweep threshold must be positive, got {h}")));
        }
        if !(self.sigma_noise >= 0.0 && self.input_std >= 0.0) {
            return Err(Error::invalid("noise and input standard deviations must be non-negative"));
        }
        integer_ratio(self.delta_u, self.delta)?;
        integer_ratio(self.duration, self.delta)?;
        Ok(())
    }

    /// Number of bands `N = T/Δ`.
    pub fn n_samples(&self) -> Result<usize> {
        integer_ratio(self.duration, self.delta)
    }

    /// Copy of the configuration with a different threshold and no sweep.
    pub fn with_h(&self, h: f64) -> Self {
        Self {
            h,
            h_sweep: Vec::new(),
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// EM iteration cap of the desk-scale presets (the full scale keeps the
/// published 40).
pub const DESK_MAX_ITER: usize = 15;

/// Scale of a preset: desk-sized defaults or the full published settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Full,
}

fn msd_system() -> SystemSpec {
    SystemSpec {
        num: vec![1.0],
        den: vec![0.05, 0.2, 1.0],
    }
}

/// Desk-scale preset by name.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    preset_scaled(name, Scale::Desk)
}

/// Preset by name at the given scale. The full scale uses 100 runs and the
/// published record lengths where they are stated.
pub fn preset_scaled(name: &str, scale: Scale) -> Result<ExperimentConfig> {
    let full = scale == Scale::Full;
    let n_runs = if full { 100 } else { 20 };
    let mut estimator = EstimatorConfig::default();
    if !full {
        estimator.hyper.max_iter = DESK_MAX_ITER;
    }
    let base = ExperimentConfig {
        name: name.to_string(),
        system: msd_system(),
        h: 1.0,
        h_sweep: Vec::new(),
        delta: 0.1,
        delta_u: 3.0,
        sigma_noise: 0.05,
        input_std: 5.0,
        duration: if full { 30.0 } else { 15.0 },
        n_runs,
        seed: 1,
        methods: Method::ALL.to_vec(),
        estimator,
    };
    let cfg = match name {
        "msd" => base,
        "msd_h_sweep" => ExperimentConfig {
            sigma_noise: 0.1,
            h_sweep: H_SWEEP.to_vec(),
            ..base
        },
        "GA" => ExperimentConfig {
            system: SystemSpec {
                num: vec![-6400.0, 1600.0],
                den: vec![1.0, 5.0, 408.0, 416.0, 1600.0],
            },
            h: 2.5,
            delta: 0.01,
            sigma_noise: 0.3,
            input_std: 1.0,
            duration: if full { 9.0 } else { 3.0 },
            ..base
        },
        "GB" => ExperimentConfig {
            system: SystemSpec {
                num: [-2000.0, -3600.0, -2095.0, -396.0].iter().map(|v| v * 27.0 / 20.0).collect(),
                den: vec![1350.0, 7695.0, 12852.0, 7796.0, 1520.0],
            },
            h: 0.2,
            delta: 0.03,
            sigma_noise: 0.03,
            input_std: 1.0,
            duration: if full { 30.0 } else { 9.0 },
            ..base
        },
        "GC" => ExperimentConfig {
            system: SystemSpec {
                num: vec![-3.025, -15.676, -32.802, -88.827],
                den: vec![1.0, 16.52, 65.534, 235.01, 292.948],
            },
            h: 0.2,
            delta: 0.03,
            sigma_noise: 0.03,
            input_std: 1.0,
            duration: if full { 30.0 } else { 9.0 },
            ..base
        },
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Simulated data of a single run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub seed: u64,
    pub input: ZohSignal,
    /// Noiseless output `x(iΔ)`, `i = 1..=N`.
    pub noiseless: Vec<f64>,
    /// Noisy output `z(iΔ)`, `i = 0..=N` (sample 0 only seeds the events).
    pub noisy: Vec<f64>,
    pub dataset: LebesgueDataset,
}

/// Seed of run `run_index`: `seed + run_index`.
pub fn run_seed(cfg: &ExperimentConfig, run_index: usize) -> u64 {
    cfg.seed.wrapping_add(run_index as u64)
}

/// Seed of the Gibbs sampler stream for a run seed.
pub fn sampler_seed(run_seed: u64) -> u64 {
    run_seed ^ SAMPLER_SALT
}

/// Simulates run `run_index` of the experiment.
pub fn simulate_run(cfg: &ExperimentConfig, run_index: usize) -> Result<RunData> {
    let seed = run_seed(cfg, run_index);
    let n = cfg.n_samples()?;
    let n_inputs = (cfg.duration / cfg.delta_u).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_dist = Normal::new(0.0, cfg.input_std).map_err(|e| Error::invalid(e.to_string()))?;
    let values = (0..n_inputs).map(|_| input_dist.sample(&mut rng)).collect();
    let input = ZohSignal::new(values, cfg.delta_u)?;
    let ss = cfg.system.transfer_function()?.to_state_space();
    let noiseless = simulate_zoh(&ss, &input, cfg.delta, n)?;

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SALT);
    let noise = Normal::new(0.0, cfg.sigma_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let noisy: Vec<f64> = std::iter::once(0.0)
        .chain(noiseless.iter().copied())
        .map(|x| x + noise.sample(&mut noise_rng))
        .collect();
    let dataset = sample_events(&noisy, cfg.h, cfg.delta)?;
    Ok(RunData {
        seed,
        input,
        noiseless,
        noisy,
        dataset,
    })
}

/// Event counts of the first `n_runs` runs, without running any estimator.
pub fn event_counts(cfg: &ExperimentConfig) -> Result<Vec<usize>> {
    (0..cfg.n_runs)
        .map(|r| simulate_run(cfg, r).map(|d| d.dataset.events().len()))
        .collect()
}

/// One estimator result of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub method: Method,
    pub fit: f64,
    pub n_events: usize,
    pub gamma_tilde: f64,
    pub beta: f64,
    pub sigma2: f64,
    pub wall_ms: u64,
}

/// A run/method combination that failed; the experiment continues without it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub seed: u64,
    pub method: Option<Method>,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

/// Execution options that do not affect results (except `timing`, which
/// fills the `wall_ms` column).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub parallel: bool,
    /// Record wall-clock times; otherwise `wall_ms` is 0 so that records are
    /// byte-reproducible.
    pub timing: bool,
}

fn run_one(cfg: &ExperimentConfig, run_index: usize, timing: bool) -> ExperimentOutcome {
    let mut out = ExperimentOutcome::default();
    let data = match simulate_run(cfg, run_index) {
        Ok(d) => d,
        Err(e) => {
            out.failures.push(RunFailure {
                seed: run_seed(cfg, run_index),
                method: None,
                error: e.to_string(),
            });
            return out;
        }
    };
    let mut est_cfg = cfg.estimator.clone();
    est_cfg.hyper.seed = sampler_seed(data.seed);
    let n_events = data.dataset.events().len();
    for &method in &cfg.methods {
        let start = Instant::now();
        let result = estimate(method, &data.input, &data.dataset, Some(&data.noisy[1..]), &est_cfg)
            .and_then(|res| res.fit(&data.noiseless).map(|f| (res.rho, f.fit)));
        let wall_ms = if timing { start.elapsed().as_millis() as u64 } else { 0 };
        match result {
            Ok((rho, fit)) => out.records.push(RunRecord {
                seed: data.seed,
                method,
                fit,
                n_events,
                gamma_tilde: rho.gamma_tilde,
                beta: rho.beta,
                sigma2: rho.sigma2,
                wall_ms,
            }),
            Err(e) => out.failures.push(RunFailure {
                seed: data.seed,
                method: Some(method),
                error: e.to_string(),
            }),
        }
    }
    out
}

/// Runs all `n_runs` runs at the configured `h` (the sweep list is ignored).
/// Records are ordered by run index, then by the configured method order.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let per_run: Vec<ExperimentOutcome> = if opts.parallel {
        (0..cfg.n_runs)
            .into_par_iter()
            .map(|r| run_one(cfg, r, opts.timing))
            .collect()
    } else {
        (0..cfg.n_runs).map(|r| run_one(cfg, r, opts.timing)).collect()
    };
    let mut out = ExperimentOutcome::default();
    for run in per_run {
        out.records.extend(run.records);
        out.failures.extend(run.failures);
    }
    Ok(out)
}

/// The thresholds an experiment covers: the sweep list, or just `h`.
pub fn thresholds(cfg: &ExperimentConfig) -> Vec<f64> {
    if cfg.h_sweep.is_empty() {
        vec![cfg.h]
    } else {
        cfg.h_sweep.clone()
    }
}

/// Runs the experiment once per threshold of [`thresholds`].
pub fn run_sweep(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Vec<(f64, ExperimentOutcome)>> {
    thresholds(cfg)
        .into_iter()
        .map(|h| run_experiment(&cfg.with_h(h), opts).map(|o| (h, o)))
        .collect()
}

/// Per-method fit quartiles and averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean_events: f64,
    #[serde(skip)]
    pub mean_wall_ms: f64,
    #[serde(skip)]
    pub runs: usize,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary per method, in the order methods first appear in `records`.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Empty("no records to summarize"));
    }
    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    Ok(methods
        .into_iter()
        .map(|method| {
            let rows: Vec<&RunRecord> = records.iter().filter(|r| r.method == method).collect();
            let mut fits: Vec<f64> = rows.iter().map(|r| r.fit).collect();
            fits.sort_by(f64::total_cmp);
            let count = rows.len() as f64;
            SummaryRow {
                method,
                min: fits[0],
                q1: quantile(&fits, 0.25),
                median: quantile(&fits, 0.5),
                q3: quantile(&fits, 0.75),
                max: fits[fits.len() - 1],
                mean_events: rows.iter().map(|r| r.n_events as f64).sum::<f64>() / count,
                mean_wall_ms: rows.iter().map(|r| r.wall_ms as f64).sum::<f64>() / count,
                runs: rows.len(),
            }
        })
        .collect())
}

pub fn median_fit(summary: &[SummaryRow], method: Method) -> Option<f64> {
    summary.iter().find(|r| r.method == method).map(|r| r.median)
}

pub fn write_records_csv<W: Write>(records: &[RunRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: std::io::Read>(reader: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(reader);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_summary_csv<W: Write>(summary: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in summary {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SignalRow {
    i: usize,
    t: f64,
    u: f64,
    x: f64,
    z: f64,
}

#[derive(Serialize, Deserialize)]
struct InputRow {
    k: usize,
    t: f64,
    u: f64,
}

/// File names used for a simulated run.
pub const BANDS_FILE: &str = "bands.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const INPUT_FILE: &str = "input.csv";
pub const SIGNALS_FILE: &str = "signals.csv";

/// Writes `bands.csv`, `events.csv`, `input.csv` (`k,t,u` hold values) and
/// `signals.csv` (`i,t,u,x,z` on the sensing grid, `i = 0..=N`) into `dir`.
pub fn write_run_files(data: &RunData, delta: f64, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    crate::sampling::write_dataset_files(&data.dataset, &dir.join(BANDS_FILE), &dir.join(EVENTS_FILE))?;
    let mut w = csv::Writer::from_path(dir.join(INPUT_FILE))?;
    for (k, &u) in data.input.values.iter().enumerate() {
        w.serialize(InputRow {
            k,
            t: k as f64 * data.input.period,
            u,
        })?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join(SIGNALS_FILE))?;
    for (i, &z) in data.noisy.iter().enumerate() {
        let t = i as f64 * delta;
        w.serialize(SignalRow {
            i,
            t,
            u: data.input.value_at(t),
            x: if i == 0 { 0.0 } else { data.noiseless[i - 1] },
            z,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads hold values written by [`write_run_files`].
pub fn read_input_csv<R: std::io::Read>(reader: R, period: f64) -> Result<ZohSignal> {
    let mut rd = csv::Reader::from_reader(reader);
    let rows: Vec<InputRow> = rd.deserialize().collect::<std::result::Result<_, _>>()?;
    ZohSignal::new(rows.into_iter().map(|r| r.u).collect(), period)
}

/// Reads `(x, z)` for `i = 1..=N` from a signals file.
pub fn read_signals_csv<R: std::io::Read>(reader: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rd = csv::Reader::from_reader(reader);
    let rows: Vec<SignalRow> = rd.deserialize().collect::<std::result::Result<_, _>>()?;
    Ok(rows.iter().filter(|r| r.i > 0).map(|r| (r.x, r.z)).unzip())
}

/// Result of one acceptance-style check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// Minimum median fit required of the Lebesgue estimator.
pub const MIN_LEBESGUE_MEDIAN_FIT: f64 = 70.0;
/// Required margin of Lebesgue over Riemann at the largest threshold.
pub const SWEEP_MARGIN: f64 = 10.0;
/// Allowed relative deviation of mean event counts from published values.
pub const EVENT_COUNT_TOL: f64 = 0.15;

/// Published mean event counts: the 30 s benchmark, and the h-sweep table.
pub const MSD_MEAN_EVENTS: f64 = 69.0;
pub const SWEEP_MEAN_EVENTS: [(f64, f64); 6] = [(1.0, 79.5), (1.2, 69.2), (1.5, 59.7), (1.8, 51.7), (2.0, 47.5), (2.5, 38.5)];

/// Ordering checks for a single-threshold experiment: Lebesgue beats
/// Riemann, the oracle is at least as good as Lebesgue, and Lebesgue reaches
/// the minimum median fit. Checks whose methods are missing are skipped.
pub fn ordering_checks(summary: &[SummaryRow]) -> Vec<Check> {
    let leb = median_fit(summary, Method::Lebesgue);
    let rie = median_fit(summary, Method::Riemann);
    let ora = median_fit(summary, Method::Oracle);
    let mut checks = Vec::new();
    if let (Some(l), Some(r)) = (leb, rie) {
        checks.push(Check {
            name: "median fit lebesgue > riemann".into(),
            passed: l > r,
            detail: format!("{l:.2} vs {r:.2}"),
        });
    }
    if let (Some(o), Some(l)) = (ora, leb) {
        checks.push(Check {
            name: "median fit oracle >= lebesgue".into(),
            passed: o >= l,
            detail: format!("{o:.2} vs {l:.2}"),
        });
    }
    if let Some(l) = leb {
        checks.push(Check {
            name: format!("median fit lebesgue >= {MIN_LEBESGUE_MEDIAN_FIT}"),
            passed: l >= MIN_LEBESGUE_MEDIAN_FIT,
            detail: format!("{l:.2}"),
        });
    }
    checks
}

/// Degradation checks over an h-sweep: the Riemann median fit does not
/// increase over thresholds 1, 1.5, 2.5, and Lebesgue beats Riemann by at
/// least [`SWEEP_MARGIN`] at the largest of them.
pub fn sweep_checks(sweep: &[(f64, Vec<SummaryRow>)]) -> Vec<Check> {
    let at = |h: f64, m: Method| {
        sweep
            .iter()
            .find(|(hh, _)| (hh - h).abs() < 1e-9)
            .and_then(|(_, s)| median_fit(s, m))
    };
    let mut checks = Vec::new();
    let rie: Vec<Option<f64>> = [1.0, 1.5, 2.5].iter().map(|&h| at(h, Method::Riemann)).collect();
    if let [Some(a), Some(b), Some(c)] = rie[..] {
        checks.push(Check {
            name: "riemann median fit non-increasing over h = 1, 1.5, 2.5".into(),
            passed: a >= b && b >= c,
            detail: format!("{a:.2}, {b:.2}, {c:.2}"),
        });
    }
    if let (Some(l), Some(r)) = (at(2.5, Method::Lebesgue), at(2.5, Method::Riemann)) {
        checks.push(Check {
            name: format!("lebesgue exceeds riemann by >= {SWEEP_MARGIN} at h = 2.5"),
            passed: l - r >= SWEEP_MARGIN,
            detail: format!("{l:.2} vs {r:.2}"),
        });
    }
    checks
}

/// Mean event count within [`EVENT_COUNT_TOL`] of a published value.
pub fn event_count_check(name: &str, mean: f64, expected: f64) -> Check {
    let rel = (mean - expected).abs() / expected;
    Check {
        name: name.to_string(),
        passed: rel <= EVENT_COUNT_TOL,
        detail: format!("mean {mean:.2} vs {expected} ({:+.1}%)", 100.0 * (mean - expected) / expected),
    }
}
