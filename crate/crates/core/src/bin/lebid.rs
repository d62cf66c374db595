//! Command-line front end: `simulate`, `identify`, `montecarlo`, `presets`.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lebid::estimator::{default_frequency_grid, estimate, Method};
use lebid::experiment::{
    event_count_check, ordering_checks, preset_scaled, read_input_csv, read_signals_csv, run_experiment, run_seed, sampler_seed, simulate_run,
    summarize, sweep_checks, thresholds, write_records_csv, write_run_files, write_summary_csv, Check,
    ExperimentConfig, RunOptions, Scale, BANDS_FILE, INPUT_FILE, PRESET_NAMES, SIGNALS_FILE, SWEEP_MEAN_EVENTS,
};
use lebid::hyper::write_hyper_trace_csv;
use lebid::sampling::read_bands_csv;
use lebid::weights::write_weight_trace_csv;
use lebid::Result;

#[derive(Parser)]
#[command(name = "lebid", version, about = "Kernel-based identification from Lebesgue-sampled data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Benchmark preset (msd, msd_h_sweep, GA, GB, GC).
    #[arg(long, default_value = "msd", conflicts_with = "config")]
    preset: String,
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the full published settings instead of desk-scale defaults.
    #[arg(long)]
    full: bool,
    /// Comma-separated subset of lebesgue,riemann,oracle.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => preset_scaled(&self.preset, if self.full { Scale::Full } else { Scale::Desk })?,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(methods) = &self.methods {
            cfg.methods = methods.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write its data files.
    Simulate {
        #[command(flatten)]
        args: ConfigArgs,
        /// Run index (the run seed is base seed + index).
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Identify one dataset and write a JSON report per method.
    Identify {
        #[command(flatten)]
        args: ConfigArgs,
        /// Directory with bands.csv and input.csv (signals.csv optional);
        /// without it, run 0 of the configuration is simulated.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also write optimizer traces.
        #[arg(long)]
        diagnostics: bool,
    },
    /// Run the seeded Monte Carlo study and write records.csv and summary.csv.
    Montecarlo {
        #[command(flatten)]
        args: ConfigArgs,
        /// Number of runs, overriding the configuration.
        #[arg(long)]
        runs: Option<usize>,
        /// Execute runs on a worker pool (results are identical).
        #[arg(long)]
        parallel: bool,
        /// Fill the wall_ms column (otherwise 0, keeping records reproducible).
        #[arg(long)]
        timing: bool,
        /// Evaluate the acceptance checks and exit nonzero if any fails.
        #[arg(long)]
        check: bool,
    },
    /// List presets, or print one as a configuration file.
    Presets {
        /// Preset to print.
        name: Option<String>,
        #[arg(long)]
        full: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { args, run } => simulate(&args, run),
        Command::Identify { args, data, diagnostics } => identify(&args, data.as_deref(), diagnostics),
        Command::Montecarlo {
            args,
            runs,
            parallel,
            timing,
            check,
        } => montecarlo(&args, runs, RunOptions { parallel, timing }, check),
        Command::Presets { name, full } => presets(name.as_deref(), full),
    }
}

fn simulate(args: &ConfigArgs, run: usize) -> Result<bool> {
    let cfg = args.resolve()?;
    let data = simulate_run(&cfg, run)?;
    write_run_files(&data, cfg.delta, &args.out_dir)?;
    std::fs::write(args.out_dir.join("config.toml"), cfg.to_toml()?)?;
    println!(
        "seed {}: {} samples, {} events -> {}",
        data.seed,
        data.dataset.n(),
        data.dataset.events().len(),
        args.out_dir.display()
    );
    Ok(true)
}

fn identify(args: &ConfigArgs, data_dir: Option<&Path>, diagnostics: bool) -> Result<bool> {
    let cfg = args.resolve()?;
    let (input, dataset, signals) = match data_dir {
        Some(dir) => {
            let input = read_input_csv(File::open(dir.join(INPUT_FILE))?, cfg.delta_u)?;
            let dataset = read_bands_csv(File::open(dir.join(BANDS_FILE))?, cfg.h)?;
            let signals = match File::open(dir.join(SIGNALS_FILE)) {
                Ok(f) => Some(read_signals_csv(f)?),
                Err(_) => None,
            };
            (input, dataset, signals)
        }
        None => {
            let d = simulate_run(&cfg, 0)?;
            let z = d.noisy[1..].to_vec();
            (d.input, d.dataset, Some((d.noiseless, z)))
        }
    };
    std::fs::create_dir_all(&args.out_dir)?;
    let mut est_cfg = cfg.estimator.clone();
    est_cfg.hyper.seed = sampler_seed(run_seed(&cfg, 0));
    let omegas = default_frequency_grid();
    for &method in &cfg.methods {
        let z = signals.as_ref().map(|(_, z)| z.as_slice());
        if method == Method::Oracle && z.is_none() {
            eprintln!("skipping oracle: no signals file with pre-quantization outputs");
            continue;
        }
        let res = estimate(method, &input, &dataset, z, &est_cfg)?;
        let fit = match &signals {
            Some((x, _)) => Some(res.fit(x)?.fit),
            None => None,
        };
        let report = res.report(fit, &omegas)?;
        let path = args.out_dir.join(format!("{method}.json"));
        serde_json::to_writer_pretty(File::create(&path)?, &report)?;
        if diagnostics {
            write_hyper_trace_csv(&res.hyper_trace, File::create(args.out_dir.join(format!("{method}_hyper_trace.csv")))?)?;
            if !res.weight_trace.is_empty() {
                write_weight_trace_csv(&res.weight_trace, File::create(args.out_dir.join(format!("{method}_weight_trace.csv")))?)?;
            }
        }
        let fit_text = fit.map_or_else(|| "n/a".to_string(), |f| format!("{f:.2}"));
        println!(
            "{method:>8}: fit {fit_text}  gamma_tilde {:.4e}  beta {:.4}  sigma2 {:.4e} -> {}",
            res.rho.gamma_tilde,
            res.rho.beta,
            res.rho.sigma2,
            path.display()
        );
    }
    Ok(true)
}

fn montecarlo(args: &ConfigArgs, runs: Option<usize>, opts: RunOptions, check: bool) -> Result<bool> {
    let mut cfg = args.resolve()?;
    if let Some(n) = runs {
        cfg.n_runs = n;
    }
    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(args.out_dir.join("config.toml"), cfg.to_toml()?)?;
    let hs = thresholds(&cfg);
    let sweep = !cfg.h_sweep.is_empty();
    let mut checks: Vec<Check> = Vec::new();
    let mut sweep_summaries = Vec::new();
    for h in hs {
        let dir = if sweep {
            args.out_dir.join(format!("h_{h}"))
        } else {
            args.out_dir.clone()
        };
        std::fs::create_dir_all(&dir)?;
        let outcome = run_experiment(&cfg.with_h(h), opts)?;
        write_records_csv(&outcome.records, File::create(dir.join("records.csv"))?)?;
        for f in &outcome.failures {
            let method = f.method.map_or_else(|| "simulation".to_string(), |m| m.to_string());
            eprintln!("run with seed {} ({method}) failed: {}", f.seed, f.error);
        }
        if outcome.records.is_empty() {
            println!("h = {h}: no records");
            continue;
        }
        let summary = summarize(&outcome.records)?;
        write_summary_csv(&summary, File::create(dir.join("summary.csv"))?)?;
        println!("h = {h}:");
        for row in &summary {
            println!(
                "  {:>8}: median fit {:7.2}  [q1 {:7.2}, q3 {:7.2}]  mean events {:.1}",
                row.method, row.median, row.q1, row.q3, row.mean_events
            );
        }
        if sweep {
            if let Some(&(_, expected)) = SWEEP_MEAN_EVENTS.iter().find(|(hh, _)| (hh - h).abs() < 1e-9) {
                if cfg.duration == 30.0 {
                    let mean = summary[0].mean_events;
                    checks.push(event_count_check(&format!("mean events at h = {h}"), mean, expected));
                }
            }
            sweep_summaries.push((h, summary));
        } else {
            checks.extend(ordering_checks(&summary));
        }
    }
    if sweep {
        checks.extend(sweep_checks(&sweep_summaries));
    }
    if !check {
        return Ok(true);
    }
    for c in &checks {
        println!("{c}");
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn presets(name: Option<&str>, full: bool) -> Result<bool> {
    let scale = if full { Scale::Full } else { Scale::Desk };
    match name {
        Some(name) => print!("{}", preset_scaled(name, scale)?.to_toml()?),
        None => {
            for name in PRESET_NAMES {
                let cfg = preset_scaled(name, scale)?;
                println!(
                    "{name:<12} h={:<5} delta={:<5} sigma={:<5} T={:<5} runs={}",
                    cfg.h, cfg.delta, cfg.sigma_noise, cfg.duration, cfg.n_runs
                );
            }
        }
    }
    Ok(true)
}
