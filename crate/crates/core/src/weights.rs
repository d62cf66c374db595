//! MAP-EM for the representer weights `c`.
//!
//! With the hidden unquantized outputs `z`, each iteration replaces every
//! band by the conditional mean `z̃_i = E[z_i | η_i ≤ z_i < η_i + h]` under
//! `z_i ~ N(K_iᵀc, σ²)` and solves `(K + γ̃I) c = z̃`. The factorization of
//! `K + γ̃I` is computed once and reused.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add_diagonal, jittered_cholesky};
use crate::sampling::Bands;
use crate::special::log_interval_prob;
use crate::truncnorm::trunc_normal_mean;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Current weights of the MAP-EM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub c: DVector<f64>,
    pub iteration: usize,
    pub converged: bool,
}

/// Settings for [`solve_weights`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightsConfig {
    /// Maximum number of M-steps.
    pub max_iter: usize,
    /// Stop when `‖c⁽ʲ⁺¹⁾ − c⁽ʲ⁾‖/‖c⁽ʲ⁾‖` falls below this.
    pub tol: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self { max_iter: 40, tol: 1e-4 }
    }
}

/// One row of the weight-iteration trace. Iteration 0 is the midpoint start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightTraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub rel_step: Option<f64>,
}

/// Result of [`solve_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit {
    pub state: WeightState,
    pub trace: Vec<WeightTraceRow>,
}

/// Cached factorization of `K + γ̃I` together with `K`.
pub struct RegularizedSystem<'a> {
    k: &'a DMatrix<f64>,
    gamma_tilde: f64,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> RegularizedSystem<'a> {
    pub fn new(k: &'a DMatrix<f64>, gamma_tilde: f64) -> Result<Self> {
        if k.nrows() != k.ncols() {
            return Err(Error::Dimension(format!("K is {}x{}", k.nrows(), k.ncols())));
        }
        if !(gamma_tilde > 0.0 && gamma_tilde.is_finite()) {
            return Err(Error::invalid(format!("gamma_tilde must be positive, got {gamma_tilde}")));
        }
        let chol = jittered_cholesky(&add_diagonal(k, gamma_tilde), "K + γ̃I")?;
        Ok(Self { k, gamma_tilde, chol })
    }

    pub fn k(&self) -> &DMatrix<f64> {
        self.k
    }

    pub fn gamma_tilde(&self) -> f64 {
        self.gamma_tilde
    }

    /// `(K + γ̃I)⁻¹ rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.k.nrows() {
            return Err(Error::Dimension(format!(
                "right-hand side has length {} for N = {}",
                rhs.len(),
                self.k.nrows()
            )));
        }
        Ok(self.chol.solve(rhs))
    }
}

/// `z̃_i`: mean of `N(pred, σ²)` truncated to `[eta, eta + h)`, nudged to lie
/// strictly inside the band.
pub fn conditional_mean(eta: f64, h: f64, pred: f64, sigma: f64) -> Result<f64> {
    let upper = eta + h;
    let m = trunc_normal_mean(pred, sigma, eta, upper)?;
    Ok(if m <= eta {
        eta.next_up()
    } else if m >= upper {
        upper.next_down()
    } else {
        m
    })
}

/// All conditional means for the predictions `pred = Kc`.
pub fn conditional_means(bands: &Bands, pred: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    if pred.len() != bands.len() {
        return Err(Error::Dimension(format!("{} predictions for {} bands", pred.len(), bands.len())));
    }
    let values = bands
        .lower
        .iter()
        .zip(pred.iter())
        .map(|(&eta, &p)| conditional_mean(eta, bands.width, p, sigma))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}

/// Midpoint start `c⁽¹⁾ = (K + γ̃I)⁻¹ (η + h/2)`.
pub fn init_midpoint(system: &RegularizedSystem<'_>, bands: &Bands) -> Result<DVector<f64>> {
    system.solve(&DVector::from_vec(bands.midpoints()))
}

/// One MAP-EM step `c⁽ʲ⁺¹⁾ = (K + γ̃I)⁻¹ z̃⁽ʲ⁾`.
pub fn map_em_step(state: &WeightState, system: &RegularizedSystem<'_>, sigma: f64, bands: &Bands) -> Result<WeightState> {
    let pred = system.k() * &state.c;
    let z = conditional_means(bands, &pred, sigma)?;
    Ok(WeightState {
        c: system.solve(&z)?,
        iteration: state.iteration + 1,
        converged: false,
    })
}

/// Log-posterior of the weights:
/// `Σ_i log ∫_{band i} exp(−(z − K_iᵀc)²/2σ²) dz − (γ̃/σ²) cᵀKc / 2`.
pub fn posterior_objective(c: &DVector<f64>, k: &DMatrix<f64>, gamma_tilde: f64, sigma: f64, bands: &Bands) -> Result<f64> {
    if c.len() != bands.len() || k.nrows() != c.len() {
        return Err(Error::Dimension(format!(
            "c has length {}, K is {}x{}, {} bands",
            c.len(),
            k.nrows(),
            k.ncols(),
            bands.len()
        )));
    }
    let pred = k * c;
    let log_sigma = sigma.ln();
    let likelihood: f64 = bands
        .lower
        .iter()
        .zip(pred.iter())
        .map(|(&eta, &p)| {
            let lo = (eta - p) / sigma;
            let hi = (eta + bands.width - p) / sigma;
            log_sigma + LN_SQRT_2PI + log_interval_prob(lo, hi)
        })
        .sum();
    Ok(likelihood - 0.5 * gamma_tilde / (sigma * sigma) * c.dot(&pred))
}

/// `K (z̃ − Kc − γ̃c)`: the posterior gradient scaled by `σ²`, zero at a
/// stationary point.
pub fn stationarity_residual(c: &DVector<f64>, k: &DMatrix<f64>, gamma_tilde: f64, sigma: f64, bands: &Bands) -> Result<DVector<f64>> {
    let pred = k * c;
    let z = conditional_means(bands, &pred, sigma)?;
    Ok(k * (z - pred - c * gamma_tilde))
}

fn relative_step(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    let diff = (new - old).norm();
    let base = old.norm();
    if base > 0.0 {
        diff / base
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Algorithm loop: midpoint start, then MAP-EM steps until the relative step
/// falls below `cfg.tol` or `cfg.max_iter` steps were taken.
pub fn solve_weights(k: &DMatrix<f64>, gamma_tilde: f64, sigma2: f64, bands: &Bands, cfg: &WeightsConfig) -> Result<WeightFit> {
    if k.nrows() != bands.len() {
        return Err(Error::Dimension(format!("K is {}x{} for {} bands", k.nrows(), k.ncols(), bands.len())));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
    }
    let sigma = sigma2.sqrt();
    let system = RegularizedSystem::new(k, gamma_tilde)?;
    let mut state = WeightState {
        c: init_midpoint(&system, bands)?,
        iteration: 0,
        converged: false,
    };
    let mut trace = vec![WeightTraceRow {
        iteration: 0,
        objective: posterior_objective(&state.c, k, gamma_tilde, sigma, bands)?,
        rel_step: None,
    }];
    for _ in 0..cfg.max_iter {
        let next = map_em_step(&state, &system, sigma, bands)?;
        let step = relative_step(&next.c, &state.c);
        state = next;
        trace.push(WeightTraceRow {
            iteration: state.iteration,
            objective: posterior_objective(&state.c, k, gamma_tilde, sigma, bands)?,
            rel_step: Some(step),
        });
        if step < cfg.tol {
            state.converged = true;
            break;
        }
    }
    Ok(WeightFit { state, trace })
}

/// Writes the weight trace as CSV `iteration,objective,rel_step`.
pub fn write_weight_trace_csv<W: Write>(trace: &[WeightTraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
