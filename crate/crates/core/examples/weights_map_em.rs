//! MAP-EM for the representer weights at fixed hyperparameters: each step
//! replaces every band by the conditional mean of the output inside it and
//! solves one ridge system. The posterior objective never decreases.
//!
//! Run with `cargo run --release --example weights_map_em`.

use lebid::experiment::{preset, simulate_run};
use lebid::hyper::GramModel;
use lebid::weights::{solve_weights, stationarity_residual};
use lebid::{InputMatrix, Result, WeightsConfig};

fn main() -> Result<()> {
    let cfg = preset("msd")?;
    let data = simulate_run(&cfg, 0)?;
    let ds = &data.dataset;
    let phi = InputMatrix::from_samples(&data.input.sample_grid(cfg.delta, ds.n())?);
    let k = GramModel::new(phi, 1, cfg.delta)?.gram(1.0)?;
    let (gamma_tilde, sigma2) = (1e-2, 0.01);
    let bands = ds.bands();

    let fit = solve_weights(&k, gamma_tilde, sigma2, &bands, &WeightsConfig { max_iter: 200, tol: 1e-10 })?;
    for row in fit.trace.iter().take(6).chain(fit.trace.last()) {
        let step = row.rel_step.map_or_else(|| "-".to_string(), |s| format!("{s:.3e}"));
        println!("iter {:3}  log-posterior {:12.6}  relative step {step}", row.iteration, row.objective);
    }
    let residual = stationarity_residual(&fit.state.c, &k, gamma_tilde, sigma2.sqrt(), &bands)?;
    let pred = &k * &fit.state.c;
    println!(
        "converged {} after {} steps; stationarity residual {:.2e} (scale {:.2e})",
        fit.state.converged,
        fit.state.iteration,
        residual.norm(),
        pred.norm().max(1.0)
    );
    let inside = (0..bands.len()).filter(|&i| bands.contains(i, pred[i])).count();
    println!("{inside} of {} fitted outputs lie inside their bands", bands.len());
    Ok(())
}
