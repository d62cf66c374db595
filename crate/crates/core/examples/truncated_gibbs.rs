//! Sample a box-truncated Gaussian with the Gibbs sampler and estimate the
//! conditional second moment `E[z zᵀ | box]` used by the hyperparameter EM.
//!
//! Run with `cargo run --example truncated_gibbs`.

use lebid::truncnorm::{gibbs_sample_box, trunc_normal_mean, BoxRegion, SecondMoment};
use lebid::Result;
use nalgebra::DMatrix;

fn main() -> Result<()> {
    // Univariate: standard normal truncated to [0, 1).
    let mean = trunc_normal_mean(0.0, 1.0, 0.0, 1.0)?;
    let samples = gibbs_sample_box(&DMatrix::from_element(1, 1, 1.0), &BoxRegion::new(vec![0.0], vec![1.0])?, 20_000, 100, 7)?;
    let moment = SecondMoment::from_samples(&samples)?;
    println!("N(0,1) on [0,1): mean {mean:.5}, second moment ≈ {:.4} (exact 0.2911)", moment.q[(0, 0)]);

    // Correlated pair confined to a box.
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
    let region = BoxRegion::new(vec![0.5, -1.0], vec![1.5, 0.0])?;
    let samples = gibbs_sample_box(&cov, &region, 5_000, 200, 11)?;
    let inside = samples.row_iter().all(|r| region.contains(&r.iter().copied().collect::<Vec<_>>()));
    let moment = SecondMoment::from_samples(&samples)?;
    println!("2-D box: every draw inside = {inside}\nsecond moment\n{:.4}", moment.q);
    Ok(())
}
