//! Continuous-time models against an independent ODE integrator and
//! direct polynomial evaluation.

mod common;

use lebid::lti::{simulate_zoh, zoh_discretize};
use lebid::{RationalTf, ZohSignal};
use num_complex::Complex64;
use proptest::prelude::*;

fn benchmarks() -> Vec<RationalTf> {
    vec![
        RationalTf::new(vec![1.0], vec![0.05, 0.2, 1.0]).unwrap(),
        RationalTf::new(vec![-6400.0, 1600.0], vec![1.0, 5.0, 408.0, 416.0, 1600.0]).unwrap(),
        RationalTf::new(vec![-3.025, -15.676, -32.802, -88.827], vec![1.0, 16.52, 65.534, 235.01, 292.948]).unwrap(),
    ]
}

#[test]
fn zoh_simulation_matches_ode_integration() {
    let mut rng = common::rng(11);
    for (tf, dt) in benchmarks().into_iter().zip([0.1, 0.01, 0.03]) {
        let ss = tf.to_state_space();
        let period = 3.0 * dt;
        let u = common::random_vec(&mut rng, 20, 1.0);
        let n = 50;
        let got = simulate_zoh(&ss, &ZohSignal::new(u.clone(), period).unwrap(), dt, n).unwrap();
        let c: Vec<f64> = ss.c.iter().copied().collect();
        let want = common::simulate_ode(&ss.a, &ss.b, &c, &u, period, dt, n);
        let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-8 * scale, "{:?}: {g} vs {w}", tf.den());
        }
    }
}

#[test]
fn realization_preserves_the_transfer_function() {
    for tf in benchmarks() {
        let ss = tf.to_state_space();
        for s in [Complex64::new(0.0, 0.3), Complex64::new(1.0, 2.0), Complex64::new(-0.1, 10.0)] {
            let (a, b) = (tf.eval(s), ss.transfer(s));
            assert!((a - b).norm() <= 1e-10 * a.norm().max(1.0));
        }
    }
}

#[test]
fn frequency_response_of_first_order_lag() {
    let tf = RationalTf::new(vec![2.0], vec![0.5, 1.0]).unwrap();
    let w = [0.0, 1.0, 2.0, 100.0];
    for (g, &omega) in tf.freq_response(&w).iter().zip(&w) {
        let want = 2.0 / (1.0 + 0.25 * omega * omega as f64).sqrt();
        assert!((g.norm() - want).abs() < 1e-12);
    }
}

#[test]
fn scalar_discretization_closed_form() {
    let ss = RationalTf::new(vec![1.0], vec![1.0, 2.0]).unwrap().to_state_space();
    let (ad, bd) = zoh_discretize(&ss, 0.25).unwrap();
    assert!((ad[(0, 0)] - (-0.5f64).exp()).abs() < 1e-15);
    assert!((bd[0] - (1.0 - (-0.5f64).exp()) / 2.0).abs() < 1e-15);
}

#[test]
fn non_dividing_step_is_rejected() {
    let ss = RationalTf::new(vec![1.0], vec![1.0, 1.0]).unwrap().to_state_space();
    let u = ZohSignal::new(vec![1.0; 3], 0.25).unwrap();
    assert!(simulate_zoh(&ss, &u, 0.1, 5).is_err());
    assert!(RationalTf::new(vec![1.0, 0.0], vec![1.0, 1.0]).is_err(), "not strictly proper");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulation_is_linear(u in prop::collection::vec(-2.0f64..2.0, 3..10), v in prop::collection::vec(-2.0f64..2.0, 3..10), a in -3.0f64..3.0) {
        let n = u.len().min(v.len());
        let ss = RationalTf::new(vec![1.0], vec![0.05, 0.2, 1.0]).unwrap().to_state_space();
        let sim = |x: Vec<f64>| simulate_zoh(&ss, &ZohSignal::new(x, 0.3).unwrap(), 0.1, 3 * n).unwrap();
        let combo: Vec<f64> = (0..n).map(|k| u[k] + a * v[k]).collect();
        let yu = sim(u[..n].to_vec());
        let yv = sim(v[..n].to_vec());
        for (k, y) in sim(combo).iter().enumerate() {
            prop_assert!((y - yu[k] - a * yv[k]).abs() <= 1e-10 * (1.0 + y.abs()));
        }
    }
}
