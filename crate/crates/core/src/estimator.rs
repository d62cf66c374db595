//! End-to-end estimators: the Lebesgue-sampling estimator (hyperparameter EM
//! followed by weight MAP-EM), and the Riemann and oracle baselines, which
//! treat midpoints or pre-quantization outputs as exact point data.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::hyper::{fit_point_data, optimize_hyperparams, GramModel, HyperEmConfig, HyperParams, HyperTraceRow};
use crate::kernel::{InputMatrix, StableSpline};
use crate::lti::ZohSignal;
use crate::sampling::LebesgueDataset;
use crate::truncnorm::BoxRegion;
use crate::weights::{solve_weights, RegularizedSystem, WeightTraceRow, WeightsConfig};

/// Which estimator produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lebesgue,
    Riemann,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lebesgue, Method::Riemann, Method::Oracle];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Lebesgue => "lebesgue",
            Method::Riemann => "riemann",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lebesgue" => Ok(Method::Lebesgue),
            "riemann" => Ok(Method::Riemann),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::invalid(format!(
                "unknown method '{other}' (expected lebesgue, riemann or oracle)"
            ))),
        }
    }
}

/// Estimator settings shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Stable-spline order `q`.
    pub order: usize,
    pub hyper: HyperEmConfig,
    pub weights: WeightsConfig,
    /// Evaluate the transfer function with the piecewise Laplace form, which
    /// is regular at the closed form's spurious poles `s = -kβ`.
    pub laplace_fallback: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            order: 1,
            hyper: HyperEmConfig::default(),
            weights: WeightsConfig::default(),
            laplace_fallback: false,
        }
    }
}

/// A fitted model `ĝ(t) = Σ_l (Φᵀc)_l ∫_{cell l} k(t, τ) dτ`.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub method: Method,
    pub c: DVector<f64>,
    pub phi: InputMatrix,
    pub rho: HyperParams,
    pub kernel: StableSpline,
    pub delta: f64,
    pub laplace_fallback: bool,
    pub hyper_trace: Vec<HyperTraceRow>,
    pub weight_trace: Vec<WeightTraceRow>,
    pub hyper_converged: bool,
    pub weights_converged: bool,
}

/// Percentage fit `100 (1 − ‖x̂ − x‖ / ‖x − x̄‖)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitScore {
    pub fit: f64,
}

pub fn fit_metric(x_hat: &[f64], x: &[f64]) -> Result<FitScore> {
    if x_hat.len() != x.len() {
        return Err(Error::Dimension(format!("{} predictions for {} reference samples", x_hat.len(), x.len())));
    }
    if x.is_empty() {
        return Err(Error::Empty("fit reference"));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let spread = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
    if spread == 0.0 {
        return Err(Error::invalid("fit reference is constant"));
    }
    let err = x_hat.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(FitScore {
        fit: 100.0 * (1.0 - err / spread),
    })
}

fn input_matrix(u: &ZohSignal, delta: f64, n: usize) -> Result<InputMatrix> {
    Ok(InputMatrix::from_samples(&u.sample_grid(delta, n)?))
}

/// Proposed estimator: hyperparameter EM on the bands, then weight MAP-EM at
/// the fitted hyperparameters.
pub fn estimate_lebesgue(u: &ZohSignal, ds: &LebesgueDataset, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let n = ds.n();
    if n == 0 {
        return Err(Error::Empty("dataset has no bands"));
    }
    let model = GramModel::new(input_matrix(u, ds.delta(), n)?, cfg.order, ds.delta())?;
    let bands = ds.bands();
    let hyper = optimize_hyperparams(&model, &BoxRegion::from_bands(&bands), ds.h(), &cfg.hyper)
        .map_err(|e| e.in_stage(Stage::Hyperparameters))?;
    let rho = hyper.rho;
    let weights = model
        .gram(rho.beta)
        .and_then(|k| solve_weights(&k, rho.gamma_tilde, rho.sigma2, &bands, &cfg.weights))
        .map_err(|e| e.in_stage(Stage::Weights))?;
    Ok(EstimateResult {
        method: Method::Lebesgue,
        c: weights.state.c,
        kernel: model.kernel(rho.beta)?,
        phi: model.phi().clone(),
        rho,
        delta: ds.delta(),
        laplace_fallback: cfg.laplace_fallback,
        hyper_trace: hyper.trace,
        weight_trace: weights.trace,
        hyper_converged: hyper.converged,
        weights_converged: weights.state.converged,
    })
}

/// Standard kernel estimator on point data `z`: one-shot Empirical Bayes with
/// `Q̄ = z zᵀ`, then `c = (K + γ̃I)⁻¹ z`.
fn estimate_point_data(
    method: Method,
    u: &ZohSignal,
    z: &[f64],
    delta: f64,
    initial: HyperParams,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    if z.is_empty() {
        return Err(Error::Empty("output data"));
    }
    let model = GramModel::new(input_matrix(u, delta, z.len())?, cfg.order, delta)?;
    let z = DVector::from_column_slice(z);
    let hyper = fit_point_data(&model, &z, &initial, &cfg.hyper).map_err(|e| e.in_stage(Stage::Hyperparameters))?;
    let rho = hyper.rho;
    let c = model
        .gram(rho.beta)
        .and_then(|k| RegularizedSystem::new(&k, rho.gamma_tilde)?.solve(&z))
        .map_err(|e| e.in_stage(Stage::Weights))?;
    Ok(EstimateResult {
        method,
        c,
        kernel: model.kernel(rho.beta)?,
        phi: model.phi().clone(),
        rho,
        delta,
        laplace_fallback: cfg.laplace_fallback,
        hyper_trace: hyper.trace,
        weight_trace: Vec::new(),
        hyper_converged: true,
        weights_converged: true,
    })
}

/// Riemann baseline: band midpoints `η_i + h/2` used as exact measurements.
pub fn estimate_riemann(u: &ZohSignal, ds: &LebesgueDataset, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let initial = cfg.hyper.initial.unwrap_or_else(|| HyperParams::initial(ds.h()));
    estimate_point_data(Method::Riemann, u, &ds.midpoints(), ds.delta(), initial, cfg)
}

/// Oracle baseline: the noisy outputs `z(iΔ)`, `i = 1..N`, before quantization.
pub fn estimate_oracle(u: &ZohSignal, z_noisy: &[f64], delta: f64, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let initial = cfg.hyper.initial.unwrap_or(HyperParams {
        gamma_tilde: 1.0,
        beta: 1.0,
        sigma2: 1.0,
    });
    estimate_point_data(Method::Oracle, u, z_noisy, delta, initial, cfg)
}

/// Runs `method`. `z_noisy` (the pre-quantization outputs for `i = 1..N`) is
/// only needed by the oracle.
pub fn estimate(
    method: Method,
    u: &ZohSignal,
    ds: &LebesgueDataset,
    z_noisy: Option<&[f64]>,
    cfg: &EstimatorConfig,
) -> Result<EstimateResult> {
    match method {
        Method::Lebesgue => estimate_lebesgue(u, ds, cfg),
        Method::Riemann => estimate_riemann(u, ds, cfg),
        Method::Oracle => {
            let z = z_noisy.ok_or_else(|| Error::invalid("the oracle estimator needs the noisy outputs"))?;
            estimate_oracle(u, z, ds.delta(), cfg)
        }
    }
}

/// One row of a frequency-response table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    pub omega: f64,
    pub re: f64,
    pub im: f64,
}

/// Serializable summary of an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub rho: HyperParams,
    pub c: Vec<f64>,
    pub fit: Option<f64>,
    pub frequency_response: Vec<FrequencyPoint>,
}

/// Log-spaced grid from `lo` to `hi` (inclusive) with `per_decade` points per decade.
pub fn log_frequency_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && per_decade > 0) {
        return Err(Error::invalid(format!("invalid frequency grid [{lo}, {hi}] x {per_decade}")));
    }
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).round().max(1.0) as usize;
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..=steps)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / steps as f64))
        .collect())
}

/// Default reporting grid: 100 points per decade over `[0.1, 100]` rad/s.
pub fn default_frequency_grid() -> Vec<f64> {
    log_frequency_grid(0.1, 100.0, 100).expect("static grid is valid")
}

impl EstimateResult {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// `Φᵀc`, the weight of each cell-integrated kernel section.
    pub fn impulse_weights(&self) -> DVector<f64> {
        self.phi.matrix().tr_mul(&self.c)
    }

    /// Gram matrix at the fitted β.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        crate::kernel::gram_matrix(&self.phi, &self.kernel.integrated_matrix(self.delta, self.n()))
    }

    /// `Ĝ(s) = cᵀ Φ 𝒦(s)`.
    pub fn transfer_function(&self, s: Complex64) -> Result<Complex64> {
        let laplace = if self.laplace_fallback {
            self.kernel.laplace_vector_piecewise(self.delta, self.n(), s)?
        } else {
            self.kernel.laplace_vector(self.delta, self.n(), s)?
        };
        let w = self.impulse_weights();
        Ok(w.iter().zip(laplace.iter()).map(|(&wi, &li)| li * wi).sum())
    }

    /// `Ĝ(iω)` on a frequency grid.
    pub fn frequency_response(&self, omegas: &[f64]) -> Result<Vec<Complex64>> {
        omegas
            .iter()
            .map(|&w| self.transfer_function(Complex64::new(0.0, w)))
            .collect()
    }

    /// Impulse-response estimate `ĝ(t)`.
    pub fn impulse_response(&self, t: f64) -> f64 {
        let w = self.impulse_weights();
        w.iter()
            .enumerate()
            .map(|(l, &wl)| wl * self.kernel.cell_integral(t, self.delta, l + 1))
            .sum()
    }

    /// Model output `K_iᵀc` at the grid times `iΔ`, `i = 1..=n_steps`.
    pub fn predict_output(&self, n_steps: usize) -> Result<Vec<f64>> {
        if n_steps > self.n() {
            return Err(Error::invalid(format!("n_steps = {n_steps} exceeds N = {}", self.n())));
        }
        let pred = self.gram()? * &self.c;
        Ok(pred.iter().take(n_steps).copied().collect())
    }

    /// Fit of the in-sample prediction against the noiseless output `x(iΔ)`.
    pub fn fit(&self, x: &[f64]) -> Result<FitScore> {
        fit_metric(&self.predict_output(x.len())?, x)
    }

    pub fn report(&self, fit: Option<f64>, omegas: &[f64]) -> Result<EstimateReport> {
        let response = self.frequency_response(omegas)?;
        Ok(EstimateReport {
            method: self.method,
            rho: self.rho,
            c: self.c.iter().copied().collect(),
            fit,
            frequency_response: omegas
                .iter()
                .zip(response)
                .map(|(&omega, g)| FrequencyPoint {
                    omega,
                    re: g.re,
                    im: g.im,
                })
                .collect(),
        })
    }
}
