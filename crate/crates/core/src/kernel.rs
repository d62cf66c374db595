//! Stable-spline kernels and the matrices built from them for ZOH inputs.
//!
//! The order-`q` stable-spline kernel is a sum of separable exponentials,
//!
//! ```text
//! k(t, τ) = Σ_{r=0}^{q-1} γ_{q,r} exp(-a_r max(t, τ)) exp(-b_r min(t, τ)),
//! a_r = β (2q - r - 1),  b_r = r β,
//! γ_{q,r} = (-1)^{q+r-1} / (r! (2q - r - 1)!)
//! ```
//!
//! so every cell integral over the sensing grid has a closed form. All closed
//! forms below are arranged so that only non-positive exponents are ever
//! evaluated, which keeps long records (`N β Δ` in the hundreds) finite.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Poles closer than this (relative to `max(1, β)`) are rejected.
pub const POLE_TOL: f64 = 1e-8;

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Coefficient `γ_{q,r}` of the order-`q` spline kernel, `0 <= r < q`.
pub fn gamma_coeff(q: usize, r: usize) -> Result<f64> {
    if q == 0 || r >= q {
        return Err(Error::invalid(format!("gamma_coeff needs 0 <= r < q, got q={q}, r={r}")));
    }
    let sign = if (q + r - 1) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign / (factorial(r) * factorial(2 * q - r - 1)))
}

/// Stable-spline kernel of order `q` with decay rate `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableSpline {
    order: usize,
    beta: f64,
}

#[derive(Debug, Clone, Copy)]
struct Term {
    coef: f64,
    a: f64,
    b: f64,
}

impl StableSpline {
    pub fn new(order: usize, beta: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("kernel order must be at least 1"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("kernel decay rate must be positive, got {beta}")));
        }
        Ok(Self { order, beta })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.order, beta)
    }

    fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        let q = self.order;
        (0..q).map(move |r| Term {
            coef: gamma_coeff(q, r).expect("r < q"),
            a: self.beta * (2 * q - r - 1) as f64,
            b: self.beta * r as f64,
        })
    }

    /// `k(t, τ)` for `t, τ >= 0`.
    pub fn eval(&self, t: f64, tau: f64) -> f64 {
        let (hi, lo) = if t >= tau { (t, tau) } else { (tau, t) };
        self.terms()
            .map(|term| term.coef * (-term.a * hi - term.b * lo).exp())
            .sum()
    }

    /// Integrated kernel matrix `O_ij = ∫_{cell i} ∫_{cell j} k(ξ, τ) dτ dξ`
    /// with cells `[Δ(i-1), Δi]`, `i = 1..=n`.
    pub fn integrated_matrix(&self, delta: f64, n: usize) -> DMatrix<f64> {
        let mut o = DMatrix::zeros(n, n);
        let mut ia = vec![0.0; n];
        let mut ib = vec![0.0; n];
        for term in self.terms() {
            for k in 0..n {
                let start = delta * k as f64;
                ia[k] = cell_exp_integral(term.a, start, delta);
                ib[k] = cell_exp_integral(term.b, start, delta);
            }
            for j in 0..n {
                for i in (j + 1)..n {
                    let v = term.coef * ia[i] * ib[j];
                    o[(i, j)] += v;
                    o[(j, i)] += v;
                }
                o[(j, j)] += term.coef * diagonal_cell(term, delta * j as f64, delta);
            }
        }
        o
    }

    /// `∫_{Δ(l-1)}^{Δl} k(t, τ) dτ` for a 1-based cell index `l`.
    pub fn cell_integral(&self, t: f64, delta: f64, l: usize) -> f64 {
        let lo = delta * (l - 1) as f64;
        let hi = delta * l as f64;
        self.terms()
            .map(|term| {
                let v = if t <= lo {
                    (-term.b * t).exp() * exp_integral(term.a, lo, hi)
                } else if t >= hi {
                    (-term.a * t).exp() * exp_integral(term.b, lo, hi)
                } else {
                    (-term.a * t).exp() * exp_integral(term.b, lo, t)
                        + (-term.b * t).exp() * exp_integral(term.a, t, hi)
                };
                term.coef * v
            })
            .sum()
    }

    /// Poles `-kβ`, `k = 0..2q`, of the closed-form Laplace vector.
    pub fn closed_form_poles(&self) -> Vec<f64> {
        (0..2 * self.order).map(|k| -(k as f64) * self.beta).collect()
    }

    fn check_poles(&self, s: Complex64, poles: impl IntoIterator<Item = f64>) -> Result<()> {
        let tol = POLE_TOL * self.beta.max(1.0);
        for pole in poles {
            if (s - pole).norm() < tol {
                return Err(Error::NearPole { s, pole });
            }
        }
        Ok(())
    }

    /// Laplace transform of the integrated kernel, `K_l(s)`, `l = 1..=n`,
    /// using the closed form with poles at `s = -kβ`, `k = 0..2q`.
    pub fn laplace_vector(&self, delta: f64, n: usize, s: Complex64) -> Result<DVector<Complex64>> {
        self.check_poles(s, self.closed_form_poles())?;
        let q = self.order;
        let beta = self.beta;
        let rate = beta * (2 * q - 1) as f64;
        let p = s + rate;
        let prod: Complex64 = (0..2 * q).map(|k| s + k as f64 * beta).product();
        let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
        let tail_coef = sign * beta.powi(2 * q as i32 - 1) / (p * prod);
        let tail_step = (-p * delta).exp();
        let tail_cell = p * delta * cphi1(p * delta);

        let sums: Vec<(f64, f64, Complex64)> = (0..q)
            .map(|r| {
                let m = (2 * q - r - 1) as f64;
                let coef = gamma_coeff(q, r).expect("r < q") / (beta * m * (s + r as f64 * beta));
                let x = beta * delta * m;
                ((-x).exp(), -(-x).exp_m1(), coef)
            })
            .collect();

        let mut out = DVector::zeros(n);
        let mut tail_decay = Complex64::new(1.0, 0.0);
        let mut decays: Vec<f64> = vec![1.0; q];
        for l in 0..n {
            let mut v = tail_coef * tail_decay * tail_cell;
            for (r, &(step, cell, coef)) in sums.iter().enumerate() {
                v += coef * (decays[r] * cell);
                decays[r] *= step;
            }
            tail_decay *= tail_step;
            out[l] = v;
        }
        Ok(out)
    }

    /// Same quantity as [`laplace_vector`](Self::laplace_vector), integrated
    /// piecewise term by term. Its only poles are the genuine ones at
    /// `s = -a_r`, so it stays accurate at `s = 0` and near `s = -rβ`.
    pub fn laplace_vector_piecewise(&self, delta: f64, n: usize, s: Complex64) -> Result<DVector<Complex64>> {
        let terms: Vec<Term> = self.terms().collect();
        self.check_poles(s, terms.iter().map(|t| -t.a))?;
        let mut out = DVector::zeros(n);
        for l in 1..=n {
            let lo = delta * (l - 1) as f64;
            let hi = delta * l as f64;
            out[l - 1] = terms
                .iter()
                .map(|term| term.coef * piecewise_laplace_term(*term, lo, hi, s))
                .sum();
        }
        Ok(out)
    }
}

/// `∫_x^y exp(-p t) dt` for real `p >= 0`.
fn exp_integral(p: f64, x: f64, y: f64) -> f64 {
    cell_exp_integral(p, x, y - x)
}

/// `∫_start^{start+len} exp(-p t) dt`.
fn cell_exp_integral(p: f64, start: f64, len: f64) -> f64 {
    if p == 0.0 {
        len
    } else {
        (-p * start).exp() * len * phi1(p * len)
    }
}

/// `(1 - e^{-x}) / x`.
fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 - x / 2.0 + x * x / 6.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(1 - e^{-x}(1 + x)) / x^2`.
fn phi2(x: f64) -> f64 {
    if x.abs() < 0.1 {
        phi2_series(Complex64::new(x, 0.0)).re
    } else {
        (-(-x).exp_m1() - x * (-x).exp()) / (x * x)
    }
}

// Σ_{m>=2} (-1)^m (m-1)/m! x^{m-2}
fn phi2_series(x: Complex64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut pow = Complex64::new(1.0, 0.0);
    let mut fact = 2.0;
    for m in 2..20 {
        if m > 2 {
            fact *= m as f64;
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        sum += pow * (sign * (m - 1) as f64 / fact);
        pow *= x;
    }
    sum
}

fn cphi1(x: Complex64) -> Complex64 {
    if x.norm() < 1e-3 {
        1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0
    } else {
        (1.0 - (-x).exp()) / x
    }
}

fn cphi2(x: Complex64) -> Complex64 {
    if x.norm() < 0.1 {
        phi2_series(x)
    } else {
        (1.0 - (-x).exp() * (1.0 + x)) / (x * x)
    }
}

/// `∫_A^B exp(-p t) dt` for complex `p`.
fn cexp_integral(p: Complex64, a: f64, b: f64) -> Complex64 {
    (-p * a).exp() * (b - a) * cphi1(p * (b - a))
}

/// Diagonal cell `∫∫_{[c, c+Δ]^2} exp(-a max - b min)`.
fn diagonal_cell(term: Term, c: f64, delta: f64) -> f64 {
    let Term { a, b, .. } = term;
    if b == 0.0 {
        2.0 * (-a * c).exp() * delta * delta * phi2(a * delta)
    } else {
        let ab = a + b;
        2.0 / b * (-ab * c).exp() * delta * (phi1(a * delta) - phi1(ab * delta))
    }
}

fn piecewise_laplace_term(term: Term, lo: f64, hi: f64, s: Complex64) -> Complex64 {
    let Term { a, b, .. } = term;
    let width = hi - lo;
    let before = exp_integral(a, lo, hi) * lo * cphi1((s + b) * lo);
    let after = exp_integral(b, lo, hi) * (-(s + a) * hi).exp() / (s + a);
    let inside = if b == 0.0 {
        let p = s + a;
        (-p * lo).exp() * width * width * cphi2(p * width) + cexp_integral(s + a, lo, hi) / a
            - (-a * hi).exp() / a * cexp_integral(s, lo, hi)
    } else {
        (-b * lo).exp() / b * cexp_integral(s + a, lo, hi) + (1.0 / a - 1.0 / b) * cexp_integral(s + a + b, lo, hi)
            - (-a * hi).exp() / a * cexp_integral(s + b, lo, hi)
    };
    before + after + inside
}

/// Lower-triangular Toeplitz matrix of input samples, `Φ_ij = u((i-j)Δ)` for `i >= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMatrix {
    phi: DMatrix<f64>,
}

impl InputMatrix {
    /// Builds `Φ` from `u(0), u(Δ), …, u((N-1)Δ)`.
    pub fn from_samples(u: &[f64]) -> Self {
        let n = u.len();
        let phi = DMatrix::from_fn(n, n, |i, j| if i >= j { u[i - j] } else { 0.0 });
        Self { phi }
    }

    pub fn from_matrix(phi: DMatrix<f64>) -> Self {
        Self { phi }
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// First column `u(0..N-1)`.
    pub fn samples(&self) -> Vec<f64> {
        self.phi.column(0).iter().copied().collect()
    }
}

/// `Φ O Φᵀ`, symmetrized.
pub fn gram_matrix(phi: &InputMatrix, o: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = phi.matrix();
    if o.nrows() != p.ncols() || o.ncols() != p.ncols() {
        return Err(Error::Dimension(format!(
            "Φ is {}x{} but O is {}x{}",
            p.nrows(),
            p.ncols(),
            o.nrows(),
            o.ncols()
        )));
    }
    let mut k = p * o * p.transpose();
    symmetrize(&mut k);
    Ok(k)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
