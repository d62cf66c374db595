//! Empirical-Bayes hyperparameter EM on Lebesgue-sampled data: Gibbs
//! sampling of the hidden outputs inside their bands alternates with a
//! closed-form σ² update and a search over (γ̃, β).
//!
//! Run with `cargo run --release --example hyperparameter_em`.

use lebid::experiment::{preset, sampler_seed, simulate_run};
use lebid::hyper::{optimize_hyperparams, GramModel, HyperEmConfig};
use lebid::truncnorm::BoxRegion;
use lebid::{InputMatrix, Result};

fn main() -> Result<()> {
    let cfg = preset("msd")?;
    let data = simulate_run(&cfg, 0)?;
    let ds = &data.dataset;
    let phi = InputMatrix::from_samples(&data.input.sample_grid(cfg.delta, ds.n())?);
    let model = GramModel::new(phi, 1, cfg.delta)?;
    let bounds = BoxRegion::from_bands(&ds.bands());

    let em = HyperEmConfig {
        max_iter: 10,
        seed: sampler_seed(data.seed),
        ..HyperEmConfig::default()
    };
    let fit = optimize_hyperparams(&model, &bounds, ds.h(), &em)?;
    println!("iter  gamma_tilde      beta    sigma2   objective");
    for row in &fit.trace {
        println!(
            "{:4}  {:11.4e}  {:8.4}  {:8.5}  {:10.3}",
            row.iteration, row.gamma_tilde, row.beta, row.sigma2, row.objective
        );
    }
    println!(
        "converged: {}; true noise variance {:.4}",
        fit.converged,
        cfg.sigma_noise * cfg.sigma_noise
    );
    Ok(())
}
