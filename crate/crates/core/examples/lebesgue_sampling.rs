//! Turn a sampled signal into Lebesgue (send-on-delta) events and the band
//! data the estimators consume, and show that the bands can be rebuilt from
//! the event stream alone.
//!
//! Run with `cargo run --example lebesgue_sampling`.

use lebid::sampling::{quantize, sample_events};
use lebid::{LebesgueDataset, Result};

fn main() -> Result<()> {
    let (h, delta) = (0.5, 0.1);
    let z: Vec<f64> = (0..=60).map(|i| 1.3 * (0.25 * i as f64).sin()).collect();
    let ds = sample_events(&z, h, delta)?;
    println!("{} samples, {} events (threshold spacing h = {h})", ds.n(), ds.events().len());
    for e in ds.events().iter().take(8) {
        println!("  event at t = {:4.1} s, level m = {:+}", e.t, e.level);
    }

    let bands = ds.bands();
    for i in (0..ds.n()).step_by(10) {
        println!(
            "  z({:4.1}) = {:+.3} lies in [{:+.2}, {:+.2})   Q_h(z) = {:+.2}",
            (i + 1) as f64 * delta,
            z[i + 1],
            bands.lower[i],
            bands.upper(i),
            quantize(z[i + 1], h)
        );
    }

    let rebuilt = LebesgueDataset::from_events(ds.events().to_vec(), h, delta, ds.n())?;
    println!("bands rebuilt from events match: {}", rebuilt.levels() == ds.levels());
    Ok(())
}
