//! Presets and configuration files: list the built-in benchmarks and round
//! trip one through TOML, as the command-line tool does with `--config`.
//!
//! Run with `cargo run --example experiment_config`.

use lebid::experiment::{preset_scaled, Scale, PRESET_NAMES};
use lebid::{ExperimentConfig, Result};

fn main() -> Result<()> {
    for name in PRESET_NAMES {
        let cfg = preset_scaled(name, Scale::Full)?;
        let tf = cfg.system.transfer_function()?;
        println!(
            "{name:<12} order {}  h = {:<4} σ = {:<5} T = {:<4} runs = {:<4} N = {}",
            tf.order(),
            cfg.h,
            cfg.sigma_noise,
            cfg.duration,
            cfg.n_runs,
            cfg.n_samples()?
        );
    }
    let mut cfg = preset_scaled("msd", Scale::Desk)?;
    cfg.seed = 2024;
    let text = cfg.to_toml()?;
    println!("\n{text}");
    assert_eq!(ExperimentConfig::from_toml(&text)?, cfg);
    println!("TOML round trip preserved the configuration");
    Ok(())
}
