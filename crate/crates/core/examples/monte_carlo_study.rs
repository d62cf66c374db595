//! A small seeded Monte Carlo study: several runs of every estimator,
//! summarized as fit quartiles and written as CSV.
//!
//! Run with `cargo run --release --example monte_carlo_study`.

use lebid::experiment::{ordering_checks, write_records_csv, write_summary_csv};
use lebid::{preset, run_experiment, summarize, Result, RunOptions};

fn main() -> Result<()> {
    let mut cfg = preset("msd")?;
    cfg.n_runs = 5;
    cfg.estimator.hyper.max_iter = 10;
    let outcome = run_experiment(&cfg, RunOptions { parallel: true, timing: false })?;
    let summary = summarize(&outcome.records)?;

    write_records_csv(&outcome.records, std::io::stdout())?;
    println!();
    write_summary_csv(&summary, std::io::stdout())?;
    println!();
    for check in ordering_checks(&summary) {
        println!("{check}");
    }
    Ok(())
}
