//! Tail-safe Gaussian interval probabilities and truncated moments.
//!
//! Intervals are given in standardized coordinates `[lo, hi)`. Intervals that
//! lie entirely in one tail are evaluated through the Mills ratio
//! `M(x) = Q(x) / φ(x)`, which never underflows.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::{erf, erfc};

/// Above this the direct ratio loses digits to rounding in `exp(-x²/2)`.
const MILLS_CF_THRESHOLD: f64 = 2.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Upper tail `Q(x) = P(Z > x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Mills ratio `Q(x) / φ(x)` for `x >= 0` (finite also for `x = +inf`, where it is 0).
pub fn mills_ratio(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    if x < MILLS_CF_THRESHOLD {
        norm_sf(x) / norm_pdf(x)
    } else {
        mills_continued_fraction(x)
    }
}

// Laplace continued fraction 1/(x+1/(x+2/(x+3/(x+...)))); full double
// precision for x >= 2 with this many terms.
fn mills_continued_fraction(x: f64) -> f64 {
    let mut t = x;
    for k in (1..=400).rev() {
        t = x + k as f64 / t;
    }
    1.0 / t
}

/// `exp(-(hi^2 - lo^2)/2)` with `hi = +inf` mapped to 0.
fn tail_ratio(lo: f64, hi: f64) -> f64 {
    if hi.is_infinite() {
        0.0
    } else {
        (-0.5 * (hi - lo) * (hi + lo)).exp()
    }
}

/// `ln P(lo <= Z < hi)` for a standard normal `Z`.
pub fn log_interval_prob(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return f64::NEG_INFINITY;
    }
    if lo >= 0.0 {
        upper_tail_log_prob(lo, hi)
    } else if hi <= 0.0 {
        upper_tail_log_prob(-hi, -lo)
    } else {
        (0.5 * (erf(hi * FRAC_1_SQRT_2) - erf(lo * FRAC_1_SQRT_2))).ln()
    }
}

// ln(Q(lo) - Q(hi)) for 0 <= lo < hi
fn upper_tail_log_prob(lo: f64, hi: f64) -> f64 {
    let r = tail_ratio(lo, hi);
    let diff = mills_ratio(lo) - r * mills_ratio(hi);
    -0.5 * lo * lo - LN_SQRT_2PI + diff.ln()
}

/// `E[Z | lo <= Z < hi]` for standard normal `Z`. Always returns a value in
/// `[lo, hi]`; when the ratio degenerates the bound nearest 0 is returned.
pub fn truncated_std_mean(lo: f64, hi: f64) -> f64 {
    let m = if lo >= 0.0 {
        upper_tail_mean(lo, hi)
    } else if hi <= 0.0 {
        -upper_tail_mean(-hi, -lo)
    } else {
        let mass = 0.5 * (erf(hi * FRAC_1_SQRT_2) - erf(lo * FRAC_1_SQRT_2));
        (norm_pdf(lo) - norm_pdf(hi)) / mass
    };
    if m.is_finite() {
        m.clamp(lo, hi)
    } else if lo >= 0.0 {
        lo
    } else {
        hi
    }
}

// (φ(lo) - φ(hi)) / (Q(lo) - Q(hi)) for 0 <= lo < hi
fn upper_tail_mean(lo: f64, hi: f64) -> f64 {
    let d = if hi.is_infinite() {
        f64::INFINITY
    } else {
        0.5 * (hi - lo) * (hi + lo)
    };
    let num = -(-d).exp_m1();
    let den = mills_ratio(lo) - tail_ratio(lo, hi) * mills_ratio(hi);
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}
