//! Simulate the mass-spring-damper benchmark under a zero-order-hold input
//! and compare the discretized response with the continuous-time model.
//!
//! Run with `cargo run --example simulate_system`.

use lebid::lti::{simulate_zoh, zoh_discretize};
use lebid::{RationalTf, Result, ZohSignal};

fn main() -> Result<()> {
    // G(s) = 1 / (s² + 0.5 s + 1): a lightly damped mass-spring-damper.
    let tf = RationalTf::new(vec![1.0], vec![1.0, 0.5, 1.0])?;
    let ss = tf.to_state_space();
    println!("order {} system, DC gain {:.4}", ss.order(), tf.eval(0.0.into()).re);

    let (ad, bd) = zoh_discretize(&ss, 0.1)?;
    println!("ZOH discretization at 0.1 s:\n  Ad = {ad}  Bd = {bd}");

    // A unit step held for 20 s: the response settles at the DC gain.
    let step = ZohSignal::new(vec![1.0; 20], 1.0)?;
    let y = simulate_zoh(&ss, &step, 0.1, 200)?;
    for (i, v) in y.iter().enumerate().filter(|(i, _)| (i + 1) % 25 == 0) {
        println!("  t = {:5.1} s  y = {v:+.4}", (i + 1) as f64 * 0.1);
    }
    Ok(())
}
