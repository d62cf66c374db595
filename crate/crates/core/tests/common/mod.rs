//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here calls into the closed forms under test: kernels are
//! evaluated from the spline definition, matrices by adaptive quadrature,
//! trajectories by an explicit Runge–Kutta integrator, and likelihoods by
//! dense inverses and determinants.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use ode_solvers::{Dopri5, System};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative accuracy target of each elementary quadrature call.
pub const QUAD_TOL: f64 = 1e-14;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Largest entrywise error relative to the largest reference entry.
pub fn mat_rel_err(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).amax() / want.amax()
}

/// Tanh–sinh quadrature of a smooth integrand over `[a, b]`. The library
/// takes an absolute target, so a coarse first pass sets the scale for a
/// relative one; integrands of magnitude 1e-20 are as accurate as those of 1.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let scale = (b - a) * [a, 0.5 * (a + b), b, a + 0.3 * (b - a)].iter().fold(0.0f64, |m, &x| m.max(f(x).abs()));
    if scale == 0.0 {
        return quadrature::double_exponential::integrate(&f, a, b, f64::MIN_POSITIVE).integral;
    }
    quadrature::double_exponential::integrate(&f, a, b, QUAD_TOL * scale).integral
}

/// Integral over `[a, b]` split at every breakpoint inside the interval, so
/// that each piece is smooth.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut points: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    points.windows(2).map(|w| integrate(&f, w[0], w[1])).sum()
}

/// Spline kernel of order `q` from its definition,
/// `s_q(x, y) = ∫₀¹ (x−u)₊^{q−1} (y−u)₊^{q−1} / ((q−1)!)² du`,
/// integrated by hand for the two orders used here.
pub fn spline(q: usize, x: f64, y: f64) -> f64 {
    let (lo, hi) = if x < y { (x, y) } else { (y, x) };
    match q {
        1 => lo,
        2 => hi * lo * lo / 2.0 - lo * lo * lo / 6.0,
        _ => panic!("oracle spline only for q = 1, 2"),
    }
}

/// Stable-spline kernel `k(t, τ) = s_q(e^{−βt}, e^{−βτ})`.
pub fn stable_spline(q: usize, beta: f64, t: f64, tau: f64) -> f64 {
    spline(q, (-beta * t).exp(), (-beta * tau).exp())
}

/// `∫_{cell i} ∫_{cell j} k(ξ, τ) dτ dξ`, with the inner integral split at the
/// kink `τ = ξ`.
pub fn integrated_entry(q: usize, beta: f64, delta: f64, i: usize, j: usize) -> f64 {
    let (a, b) = (delta * i as f64, delta * (i + 1) as f64);
    let (c, d) = (delta * j as f64, delta * (j + 1) as f64);
    integrate_pieces(
        |xi| integrate_pieces(|tau| stable_spline(q, beta, xi, tau), c, d, &[xi]),
        a,
        b,
        &[c, d],
    )
}

pub fn integrated_matrix(q: usize, beta: f64, delta: f64, n: usize) -> DMatrix<f64> {
    let mut o = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = integrated_entry(q, beta, delta, i, j);
            o[(i, j)] = v;
            o[(j, i)] = v;
        }
    }
    o
}

/// Zero-order hold `u(t) = u_k` on `[kΔ, (k+1)Δ)`.
pub fn zoh(u: &[f64], delta: f64, t: f64) -> f64 {
    let k = (t / delta).floor();
    if k < 0.0 {
        return 0.0;
    }
    u.get(k as usize).copied().unwrap_or(*u.last().unwrap())
}

/// Gram matrix by direct double quadrature of
/// `K_ij = ∫₀^{t_i} ∫₀^{t_j} u(t_i − ξ) k(ξ, τ) u(t_j − τ) dτ dξ`, `t_i = iΔ`.
/// The input is evaluated at the midpoint of each piece, where it is
/// unambiguous.
pub fn gram_direct(q: usize, beta: f64, delta: f64, u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let grid: Vec<f64> = (0..=n).map(|k| delta * k as f64).collect();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let (ti, tj) = (grid[i + 1], grid[j + 1]);
            let mut total = 0.0;
            for a in 0..=i {
                let (xa, xb) = (grid[a], grid[a + 1]);
                let ui = zoh(u, delta, ti - 0.5 * (xa + xb));
                for b in 0..=j {
                    let (ya, yb) = (grid[b], grid[b + 1]);
                    let uj = zoh(u, delta, tj - 0.5 * (ya + yb));
                    let inner = |xi: f64| integrate_pieces(|tau| stable_spline(q, beta, xi, tau), ya, yb, &[xi]);
                    total += ui * uj * integrate_pieces(inner, xa, xb, &[ya, yb]);
                }
            }
            k[(i, j)] = total;
            k[(j, i)] = total;
        }
    }
    k
}

/// Truncated numerical Laplace transform
/// `∫₀^T e^{−st} ∫_{cell l} k(t, τ) dτ dt` of the integrated kernel
/// (1-based cell `l`).
pub fn laplace_entry(q: usize, beta: f64, delta: f64, l: usize, s: Complex64, t_end: f64) -> Complex64 {
    let (lo, hi) = (delta * (l - 1) as f64, delta * l as f64);
    let cell = |t: f64| integrate_pieces(|tau| stable_spline(q, beta, t, tau), lo, hi, &[t]);
    let mut breaks = vec![lo, hi];
    // extra breakpoints keep each tanh–sinh piece well resolved
    let pieces = 40;
    breaks.extend((1..pieces).map(|k| t_end * k as f64 / pieces as f64));
    let re = integrate_pieces(|t| ((-s * t).exp() * cell(t)).re, 0.0, t_end, &breaks);
    let im = integrate_pieces(|t| ((-s * t).exp() * cell(t)).im, 0.0, t_end, &breaks);
    Complex64::new(re, im)
}

struct HeldLinear {
    a: DMatrix<f64>,
    b: DVector<f64>,
    u: f64,
}

impl System<f64, ode_solvers::DVector<f64>> for HeldLinear {
    fn system(&self, _t: f64, x: &ode_solvers::DVector<f64>, dx: &mut ode_solvers::DVector<f64>) {
        for i in 0..self.a.nrows() {
            dx[i] = (0..self.a.ncols()).map(|j| self.a[(i, j)] * x[j]).sum::<f64>() + self.b[i] * self.u;
        }
    }
}

/// Output `c x(kΔ)`, `k = 1..=n`, of `ẋ = Ax + Bu` from rest under a
/// zero-order-hold input of period `period`, by adaptive Dormand–Prince
/// integration restarted at every hold boundary.
pub fn simulate_ode(a: &DMatrix<f64>, b: &DVector<f64>, c: &[f64], u: &[f64], period: f64, delta: f64, n: usize) -> Vec<f64> {
    let dim = a.nrows();
    let mut x = ode_solvers::DVector::<f64>::zeros(dim);
    let mut out = Vec::with_capacity(n);
    let per = (period / delta).round() as usize;
    for k in 0..n {
        let t0 = delta * k as f64;
        let hold = u.get(k / per).copied().unwrap_or(0.0);
        let sys = HeldLinear { a: a.clone(), b: b.clone(), u: hold };
        let mut solver = Dopri5::new(sys, t0, t0 + delta, delta, x.clone(), 1e-12, 1e-14);
        // step endpoints only: the dense interpolant is far less accurate
        solver.set_output(ode_solvers::OutputType::Sparse);
        solver.integrate().expect("ODE integration");
        x = solver.y_out().last().expect("solution").clone();
        out.push((0..dim).map(|i| c[i] * x[i]).sum());
    }
    out
}

/// Concentrated marginal objective from dense linear algebra: with
/// `A = K/γ̃ + I`, minimizes `log det(σ²A) + tr((σ²A)⁻¹ Q)` over `σ²`.
/// Returns `(objective, argmin σ²)`.
pub fn concentrated_dense(k: &DMatrix<f64>, gamma_tilde: f64, q: &DMatrix<f64>) -> (f64, f64) {
    let n = k.nrows() as f64;
    let a = k / gamma_tilde + DMatrix::identity(k.nrows(), k.nrows());
    let a_inv = a.clone().try_inverse().expect("A invertible");
    let sigma2 = (a_inv * q).trace() / n;
    let logdet = a.determinant().ln();
    (n * sigma2.ln() + logdet + n, sigma2)
}

/// Unconcentrated objective `log det(σ²A) + tr((σ²A)⁻¹ Q)`.
pub fn marginal_dense(k: &DMatrix<f64>, gamma_tilde: f64, sigma2: f64, q: &DMatrix<f64>) -> f64 {
    let s = (k / gamma_tilde + DMatrix::identity(k.nrows(), k.nrows())) * sigma2;
    s.determinant().ln() + (s.try_inverse().expect("S invertible") * q).trace()
}

/// Minimizer of a smooth unimodal function on `[lo, hi]`: bisection on the
/// sign of a central-difference slope. Unlike golden section, whose
/// resolution is limited to about √ε by comparing function values, this
/// locates the minimizer to roughly ε|f| / (h f'') + h².
pub fn minimize_unimodal<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let h = 1e-6;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid + h) - f(mid - h) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| 2.0 * rng.random::<f64>() - 1.0)
}

/// Random symmetric positive definite matrix `G Gᵀ + εI`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = random_matrix(rng, n, n);
    &g * g.transpose() + DMatrix::identity(n, n) * 1e-2
}

/// Small identification problem: Gram matrix of a random ZOH input, and
/// bands of width `h` around a noisy output of a random kernel model.
pub struct ToyProblem {
    pub k: DMatrix<f64>,
    pub bands: lebid::Bands,
    pub gamma_tilde: f64,
    pub sigma2: f64,
}

pub fn toy_problem(seed: u64, n: usize, h: f64) -> ToyProblem {
    let mut rng = rng(seed);
    let u = random_vec(&mut rng, n, 2.0);
    let o = lebid::StableSpline::new(1 + (seed as usize % 2), 0.5 + rng.random::<f64>() * 2.0)
        .unwrap()
        .integrated_matrix(0.2, n);
    let k = lebid::kernel::gram_matrix(&lebid::InputMatrix::from_samples(&u), &o).unwrap();
    let c = DVector::from_vec(random_vec(&mut rng, n, 5.0));
    let z = &k * c;
    let lower: Vec<f64> = z
        .iter()
        .map(|v| ((v + 0.1 * (2.0 * rng.random::<f64>() - 1.0)) / h).floor() * h)
        .collect();
    ToyProblem {
        k,
        bands: lebid::Bands::new(lower, h).unwrap(),
        gamma_tilde: 10f64.powf(-3.0 + 3.0 * rng.random::<f64>()),
        sigma2: 10f64.powf(-3.0 + 2.0 * rng.random::<f64>()),
    }
}
