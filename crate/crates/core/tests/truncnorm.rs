//! Truncated Gaussians: closed-form moments against quadrature, samplers
//! against their target distributions.

mod common;

use lebid::special::{log_interval_prob, mills_ratio, norm_cdf};
use lebid::truncnorm::{gibbs_sample_box, sample_mean, sample_truncated_std, trunc_normal_mean, BoxRegion, SecondMoment};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Mean of `N(mu, σ²)` on `[a, b]` by quadrature, with the density
/// rescaled at its mode inside the interval so the far tails do not underflow.
fn mean_by_quadrature(mu: f64, sigma: f64, a: f64, b: f64) -> f64 {
    let peak = mu.clamp(a, b);
    let w = |z: f64| (-((z - mu).powi(2) - (peak - mu).powi(2)) / (2.0 * sigma * sigma)).exp();
    let width = (b - a).min(50.0 * sigma);
    let (lo, hi) = if peak == b { (b - width, b) } else { (a, a + width) };
    let breaks: Vec<f64> = (1..20).map(|k| lo + (hi - lo) * k as f64 / 20.0).collect();
    common::integrate_pieces(|z| z * w(z), lo, hi, &breaks) / common::integrate_pieces(w, lo, hi, &breaks)
}

#[test]
fn truncated_mean_matches_quadrature() {
    let cases = [
        (0.0, 1.0, 0.0, 1.0),
        (0.3, 0.2, -1.0, 1.5),
        (5.0, 0.1, 0.0, 1.0),
        (-40.0, 1.0, 0.0, 2.5),
        (12.0, 0.5, -3.0, -2.0),
        (0.0, 1.0, 9.0, 10.0),
        (1.0, 0.05, 0.95, 1.05),
    ];
    for (mu, sigma, a, b) in cases {
        let got = trunc_normal_mean(mu, sigma, a, b).unwrap();
        let want = mean_by_quadrature(mu, sigma, a, b);
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{mu} {sigma} [{a},{b}]: {got} vs {want}");
    }
}

#[test]
fn mills_ratio_and_tails() {
    for x in [0.0, 0.5, 1.9, 2.0, 2.1, 6.0, 30.0] {
        let breaks: Vec<f64> = (1..40).map(|k| x + k as f64 * 0.25).collect();
        let want = common::integrate_pieces(|t| (-(t - x) * (t + x) / 2.0).exp(), x, x + 10.0, &breaks);
        assert!(common::rel_err(mills_ratio(x), want) < 1e-12, "x = {x}: {} vs {want}", mills_ratio(x));
    }
    let lp = log_interval_prob(-1.0, 1.0);
    assert!((lp - (norm_cdf(1.0) - norm_cdf(-1.0)).ln()).abs() < 1e-14);
    assert!(log_interval_prob(40.0, 41.0).is_finite());
}

#[test]
fn unit_box_second_moment_for_scalar_gaussian() {
    let region = BoxRegion::new(vec![0.0], vec![1.0]).unwrap();
    let s = 10_000;
    let samples = gibbs_sample_box(&DMatrix::from_element(1, 1, 1.0), &region, s, 100, 5).unwrap();
    let q = SecondMoment::from_samples(&samples).unwrap().q[(0, 0)];
    let sq: Vec<f64> = samples.iter().map(|z| z * z).collect();
    let mean = sq.iter().sum::<f64>() / s as f64;
    let se = (sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1) as f64 / s as f64).sqrt();
    let exact = 1.0 - (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt() / (norm_cdf(1.0) - 0.5);
    assert!((exact - 0.2911).abs() < 1e-4);
    assert!((q - exact).abs() < 3.0 * se, "{q} vs {exact} ± {se}");
}

#[test]
fn gibbs_mean_matches_product_of_univariate_truncations() {
    // independent coordinates: the box-truncated mean factorizes
    let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.25, 4.0]));
    let lo = vec![-0.5, 0.2, -3.0];
    let hi = vec![1.0, 0.9, -1.0];
    let samples = gibbs_sample_box(&cov, &BoxRegion::new(lo.clone(), hi.clone()).unwrap(), 20_000, 200, 9).unwrap();
    let m = sample_mean(&samples);
    for i in 0..3 {
        let want = trunc_normal_mean(0.0, cov[(i, i)].sqrt(), lo[i], hi[i]).unwrap();
        assert!((m[i] - want).abs() < 0.01, "coordinate {i}: {} vs {want}", m[i]);
    }
}

#[test]
fn far_tail_draws_stay_inside() {
    let mut rng = common::rng(1);
    for (lo, hi) in [(8.0, 8.5), (-40.0, -39.0), (30.0, f64::INFINITY), (-1e-3, 1e-3)] {
        for _ in 0..1000 {
            let z = sample_truncated_std(&mut rng, lo, hi);
            assert!(z >= lo && z < hi, "{z} outside [{lo}, {hi})");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gibbs_draws_respect_the_box(seed in 0u64..1000, n in 1usize..6, width in 0.01f64..3.0, offset in -4.0f64..4.0) {
        let mut rng = common::rng(seed);
        let cov = common::random_spd(&mut rng, n);
        let lo: Vec<f64> = common::random_vec(&mut rng, n, 2.0).iter().map(|v| v + offset).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + width).collect();
        let region = BoxRegion::new(lo, hi).unwrap();
        let samples = gibbs_sample_box(&cov, &region, 300, 10, seed).unwrap();
        for r in samples.row_iter() {
            let z: Vec<f64> = r.iter().copied().collect();
            prop_assert!(region.contains(&z));
        }
    }

    #[test]
    fn truncated_mean_lies_in_the_interval(mu in -50.0f64..50.0, sigma in 0.01f64..10.0, a in -20.0f64..20.0, w in 1e-6f64..10.0) {
        let m = trunc_normal_mean(mu, sigma, a, a + w).unwrap();
        prop_assert!(m >= a && m <= a + w);
    }
}
