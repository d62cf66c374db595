//! Empirical-Bayes hyperparameter estimation `ρ = (γ̃, β, σ²)` by EM.
//!
//! The marginal model of the unquantized outputs is `z ~ N(0, S_ρ)` with
//! `S_ρ = σ² (K_β/γ̃ + I)`. Each EM step estimates `Q̄ = E[z zᵀ | bands, ρ]`
//! by Gibbs sampling, then minimizes the concentrated objective
//!
//! ```text
//! J(γ̃, β) = N log(‖C‖² − ‖R₂‖²) + 2 log det R₁,   Q̄ = C Cᵀ
//! ```
//!
//! over `(γ̃, β)` and sets `σ² = (‖C‖² − ‖R₂‖²)/N`.
//!
//! Two equivalent evaluation routes are provided. The R-block route follows
//! the definition (`R₁ᵀR₁ = LᵀΦᵀΦL + I`, `R₁ᵀR₂ = LᵀΦᵀC`, `L Lᵀ = 𝒪_β/γ̃`).
//! The spectral route writes `K_β = W diag(d) Wᵀ`, so that
//!
//! ```text
//! ‖C‖² − ‖R₂‖² = Σ_k γ̃ q_k / (γ̃ + d_k),   2 log det R₁ = Σ_k log(1 + d_k/γ̃),
//! q_k = w_kᵀ Q̄ w_k,
//! ```
//!
//! which makes the γ̃-direction O(N) per evaluation once β is fixed. The
//! M-step uses the spectral route as a profile search: an outer scalar search
//! over log β with an inner scalar search over log γ̃.

use std::cell::RefCell;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, InputMatrix, StableSpline};
use crate::linalg::{add_diagonal, jittered_cholesky};
use crate::optim::{minimize_scalar, ScalarSearch};
use crate::truncnorm::{BoxRegion, GibbsSampler, SecondMoment, DEFAULT_BURN_IN, DEFAULT_SAMPLES};

/// Hyperparameters `ρ = (γ̃, β, σ²)` with `γ̃ = γσ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub gamma_tilde: f64,
    pub beta: f64,
    pub sigma2: f64,
}

impl HyperParams {
    pub fn new(gamma_tilde: f64, beta: f64, sigma2: f64) -> Result<Self> {
        let rho = Self {
            gamma_tilde,
            beta,
            sigma2,
        };
        if rho.as_array().iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(rho)
        } else {
            Err(Error::invalid(format!("hyperparameters must be positive and finite: {rho:?}")))
        }
    }

    /// Agnostic starting point: `γ̃ = 1`, `β = 1`, and the variance of a
    /// uniform distribution over one band, `σ² = h²/12`.
    pub fn initial(h: f64) -> Self {
        Self {
            gamma_tilde: 1.0,
            beta: 1.0,
            sigma2: h * h / 12.0,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.gamma_tilde, self.beta, self.sigma2]
    }

    /// `‖ρ − other‖₂ / ‖other‖₂`.
    pub fn relative_change(&self, other: &Self) -> f64 {
        let a = self.as_array();
        let b = other.as_array();
        let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den
    }
}

/// Admissible box `Γ` for the hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub gamma_tilde: (f64, f64),
    pub beta: (f64, f64),
    pub sigma2: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            gamma_tilde: (1e-8, 1e6),
            beta: (1e-3, 1e3),
            sigma2: (1e-10, 1e6),
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("gamma_tilde", self.gamma_tilde), ("beta", self.beta), ("sigma2", self.sigma2)] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::invalid(format!("invalid {name} bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, rho: HyperParams) -> HyperParams {
        HyperParams {
            gamma_tilde: rho.gamma_tilde.clamp(self.gamma_tilde.0, self.gamma_tilde.1),
            beta: rho.beta.clamp(self.beta.0, self.beta.1),
            sigma2: rho.sigma2.clamp(self.sigma2.0, self.sigma2.1),
        }
    }

    pub fn contains(&self, rho: &HyperParams) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(rho.gamma_tilde, self.gamma_tilde) && inside(rho.beta, self.beta) && inside(rho.sigma2, self.sigma2)
    }
}

/// Everything needed to form `K_β = Φ 𝒪_β Φᵀ` for any β.
#[derive(Debug, Clone)]
pub struct GramModel {
    phi: InputMatrix,
    order: usize,
    delta: f64,
}

impl GramModel {
    pub fn new(phi: InputMatrix, order: usize, delta: f64) -> Result<Self> {
        StableSpline::new(order, 1.0)?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("grid period must be positive, got {delta}")));
        }
        Ok(Self { phi, order, delta })
    }

    pub fn phi(&self) -> &InputMatrix {
        &self.phi
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n(&self) -> usize {
        self.phi.n()
    }

    pub fn kernel(&self, beta: f64) -> Result<StableSpline> {
        StableSpline::new(self.order, beta)
    }

    /// Integrated kernel matrix `𝒪_β`.
    pub fn integrated(&self, beta: f64) -> Result<DMatrix<f64>> {
        Ok(self.kernel(beta)?.integrated_matrix(self.delta, self.n()))
    }

    /// Gram matrix `K_β`.
    pub fn gram(&self, beta: f64) -> Result<DMatrix<f64>> {
        gram_matrix(&self.phi, &self.integrated(beta)?)
    }

    pub fn spectral(&self, beta: f64) -> Result<SpectralGram> {
        SpectralGram::new(&self.gram(beta)?)
    }
}

/// Blocks `R₁` (upper triangular, positive diagonal) and `R₂` of the QR
/// factorization of `[[ΦL, C], [I, 0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QrBlocks {
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
}

impl QrBlocks {
    pub fn log_det_r1(&self) -> f64 {
        self.r1.diagonal().iter().map(|d| d.ln()).sum()
    }
}

fn check_blocks(phi_l: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    let n = phi_l.nrows();
    if phi_l.ncols() != n || c.nrows() != n {
        return Err(Error::Dimension(format!(
            "ΦL is {}x{}, C is {}x{}",
            phi_l.nrows(),
            phi_l.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(())
}

/// Householder QR of the stacked `2N × (N+k)` matrix `[[ΦL, C], [I, 0]]`,
/// keeping only `R₁` (`N×N`) and `R₂` (`N×k`), rows sign-normalized so that
/// `diag(R₁) > 0`.
pub fn stacked_qr(phi_l: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<QrBlocks> {
    check_blocks(phi_l, c)?;
    let n = phi_l.nrows();
    let k = c.ncols();
    let mut stacked = DMatrix::zeros(2 * n, n + k);
    stacked.view_mut((0, 0), (n, n)).copy_from(phi_l);
    stacked.view_mut((0, n), (n, k)).copy_from(c);
    for i in 0..n {
        stacked[(n + i, i)] = 1.0;
    }
    let r = stacked.qr().r();
    let mut r1 = r.view((0, 0), (n, n)).into_owned();
    let mut r2 = r.view((0, n), (n, k)).into_owned();
    for i in 0..n {
        if r1[(i, i)] < 0.0 {
            r1.row_mut(i).neg_mut();
            r2.row_mut(i).neg_mut();
        }
    }
    Ok(QrBlocks { r1, r2 })
}

/// The same blocks as [`stacked_qr`] through the normal equations:
/// `R₁ = chol(LᵀΦᵀΦL + I)ᵀ`, `R₂ = R₁⁻ᵀ LᵀΦᵀC`. Equal by uniqueness of the
/// positive-diagonal factorization, and cheaper.
pub fn r_blocks(phi_l: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<QrBlocks> {
    check_blocks(phi_l, c)?;
    let gram = add_diagonal(&phi_l.tr_mul(phi_l), 1.0);
    let chol = gram
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("LᵀΦᵀΦL + I"))?;
    let lower = chol.l();
    let rhs = phi_l.tr_mul(c);
    let r2 = lower
        .solve_lower_triangular(&rhs)
        .ok_or(Error::NotPositiveDefinite("LᵀΦᵀΦL + I"))?;
    Ok(QrBlocks {
        r1: lower.transpose(),
        r2,
    })
}

/// Lower factor `L` with `L Lᵀ = 𝒪_β / γ̃` (jitter escalation on failure).
pub fn scaled_kernel_factor(o: &DMatrix<f64>, gamma_tilde: f64) -> Result<DMatrix<f64>> {
    let chol = jittered_cholesky(o, "integrated kernel matrix")?;
    Ok(chol.unpack() / gamma_tilde.sqrt())
}

fn r_blocks_at(model: &GramModel, gamma_tilde: f64, beta: f64, c: &DMatrix<f64>) -> Result<QrBlocks> {
    let l = scaled_kernel_factor(&model.integrated(beta)?, gamma_tilde)?;
    let phi_l = model.phi().matrix() * l;
    r_blocks(&phi_l, c)
}

/// Concentrated EM objective `N log(‖C‖² − ‖R₂‖²) + 2 log det R₁`, `+∞` when
/// `‖C‖² ≤ ‖R₂‖²` (numerically inconsistent second moment).
pub fn em_objective(model: &GramModel, gamma_tilde: f64, beta: f64, c: &DMatrix<f64>) -> Result<f64> {
    let blocks = r_blocks_at(model, gamma_tilde, beta, c)?;
    let residual = c.norm_squared() - blocks.r2.norm_squared();
    if residual <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(model.n() as f64 * residual.ln() + 2.0 * blocks.log_det_r1())
}

/// Closed-form noise variance `(‖C‖² − ‖R₂‖²)/N` at `(γ̃, β)`.
pub fn sigma2_update(model: &GramModel, gamma_tilde: f64, beta: f64, c: &DMatrix<f64>) -> Result<f64> {
    let blocks = r_blocks_at(model, gamma_tilde, beta, c)?;
    let residual = c.norm_squared() - blocks.r2.norm_squared();
    if residual > 0.0 {
        Ok(residual / model.n() as f64)
    } else {
        Err(Error::InconsistentMoment(residual))
    }
}

/// Eigendecomposition `K = W diag(d) Wᵀ` with eigenvalues clipped at 0.
#[derive(Debug, Clone)]
pub struct SpectralGram {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Second-moment information in the form the M-step consumes.
#[derive(Debug, Clone, Copy)]
pub enum Moments<'a> {
    /// A full `N×N` second-moment matrix `Q̄`.
    Matrix(&'a DMatrix<f64>),
    /// A rank-one moment `Q̄ = z zᵀ`.
    Vector(&'a DVector<f64>),
}

impl Moments<'_> {
    fn dim(&self) -> usize {
        match self {
            Moments::Matrix(q) => q.nrows(),
            Moments::Vector(z) => z.len(),
        }
    }
}

impl SpectralGram {
    pub fn new(k: &DMatrix<f64>) -> Result<Self> {
        if !k.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("Gram matrix has non-finite entries"));
        }
        // Entries this far below the largest cannot move any eigenvalue that
        // matters at admissible γ̃, but strongly graded matrices (large βΔ)
        // make the QL iteration overflow on them.
        let floor = k.amax() * f64::EPSILON * f64::EPSILON;
        let flushed = k.map(|v| if v.abs() < floor { 0.0 } else { v });
        let eig = SymmetricEigen::new(flushed);
        if !(eig.eigenvalues.iter().all(|v| v.is_finite()) && eig.eigenvectors.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid("eigendecomposition of the Gram matrix did not converge"));
        }
        Ok(Self {
            values: eig.eigenvalues.map(|d| d.max(0.0)),
            vectors: eig.eigenvectors,
        })
    }

    /// `q_k = w_kᵀ Q̄ w_k`.
    pub fn project(&self, moments: Moments<'_>) -> DVector<f64> {
        match moments {
            Moments::Matrix(q) => {
                let qw = q * &self.vectors;
                DVector::from_iterator(
                    self.vectors.ncols(),
                    (0..self.vectors.ncols()).map(|k| self.vectors.column(k).dot(&qw.column(k))),
                )
            }
            Moments::Vector(z) => self.vectors.tr_mul(z).map(|v| v * v),
        }
    }

    /// `(‖C‖² − ‖R₂‖², 2 log det R₁)` at `γ̃` for projected moments `q`.
    pub fn residual_and_logdet(&self, gamma_tilde: f64, q: &DVector<f64>) -> (f64, f64) {
        let mut residual = 0.0;
        let mut logdet = 0.0;
        for (&d, &qk) in self.values.iter().zip(q.iter()) {
            residual += gamma_tilde * qk / (gamma_tilde + d);
            logdet += (d / gamma_tilde).ln_1p();
        }
        (residual, logdet)
    }

    /// Concentrated objective at `γ̃`; the residual is floored at
    /// `N · sigma2_floor` so that all-zero data still yield a finite value.
    pub fn objective(&self, gamma_tilde: f64, q: &DVector<f64>, sigma2_floor: f64) -> f64 {
        let n = q.len() as f64;
        let (residual, logdet) = self.residual_and_logdet(gamma_tilde, q);
        n * residual.max(n * sigma2_floor).ln() + logdet
    }
}

/// Unconcentrated marginal objective `log det S_ρ + tr(S_ρ⁻¹ Q̄)`.
pub fn marginal_objective(spectral: &SpectralGram, rho: &HyperParams, q: &DVector<f64>) -> f64 {
    let n = q.len() as f64;
    let (residual, logdet) = spectral.residual_and_logdet(rho.gamma_tilde, q);
    n * rho.sigma2.ln() + logdet + residual / rho.sigma2
}

/// Settings for the hyperparameter EM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperEmConfig {
    /// Maximum number of EM iterations.
    pub max_iter: usize,
    /// Stop when `‖ρ⁽ʲ⁺¹⁾ − ρ⁽ʲ⁾‖/‖ρ⁽ʲ⁾‖` falls below this.
    pub tol: f64,
    /// Retained Gibbs sweeps per EM step.
    pub n_samples: usize,
    /// Discarded Gibbs sweeps per EM step.
    pub burn_in: usize,
    pub bounds: Bounds,
    /// β range of the seeding grid used when no previous iterate is trusted.
    pub beta_grid: (f64, f64),
    /// Grid points for the seeding β search.
    pub grid_points: usize,
    /// Half-width (in decades) of the local β search around the previous iterate.
    pub local_decades: f64,
    /// Starting point; `None` means [`HyperParams::initial`] for the band width.
    pub initial: Option<HyperParams>,
    pub seed: u64,
}

impl Default for HyperEmConfig {
    fn default() -> Self {
        Self {
            max_iter: 40,
            tol: 1e-3,
            n_samples: DEFAULT_SAMPLES,
            burn_in: DEFAULT_BURN_IN,
            bounds: Bounds::default(),
            beta_grid: (1e-2, 1e2),
            grid_points: 8,
            local_decades: 1.0,
            initial: None,
            seed: 0,
        }
    }
}

/// Outcome of one M-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MStep {
    pub rho: HyperParams,
    /// Concentrated objective at the returned `(γ̃, β)`.
    pub objective: f64,
    /// Concentrated objective at the incoming `(γ̃, β)`.
    pub incoming_objective: f64,
}

/// Where the β search looks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSearch {
    /// Grid over the configured seeding range, then Brent refinement.
    Global,
    /// Brent refinement around the incoming β.
    Local,
}

const GAMMA_SEARCH: ScalarSearch = ScalarSearch {
    grid_points: 15,
    xtol: 1e-5,
    max_iters: 100,
};

struct ProfilePoint {
    beta: f64,
    gamma_tilde: f64,
    objective: f64,
    residual: f64,
}

fn profile_in_gamma(spectral: &SpectralGram, q: &DVector<f64>, bounds: &Bounds) -> Result<(f64, f64, f64)> {
    let floor = bounds.sigma2.0;
    let (lo, hi) = (bounds.gamma_tilde.0.ln(), bounds.gamma_tilde.1.ln());
    let best = minimize_scalar(|lg| spectral.objective(lg.exp(), q, floor), lo, hi, GAMMA_SEARCH)?;
    let gamma_tilde = best.x.exp().clamp(bounds.gamma_tilde.0, bounds.gamma_tilde.1);
    let (residual, _) = spectral.residual_and_logdet(gamma_tilde, q);
    Ok((gamma_tilde, spectral.objective(gamma_tilde, q, floor), residual))
}

/// Minimizes the concentrated objective over `(γ̃, β)` for fixed moments, then
/// sets σ² in closed form. The incoming `(γ̃, β)` is kept whenever the search
/// does not improve on it, so the step never increases the objective.
pub fn m_step(
    model: &GramModel,
    moments: Moments<'_>,
    incoming: &HyperParams,
    cfg: &HyperEmConfig,
    search: BetaSearch,
) -> Result<MStep> {
    if moments.dim() != model.n() {
        return Err(Error::Dimension(format!(
            "moments have dimension {} but the model has N = {}",
            moments.dim(),
            model.n()
        )));
    }
    let bounds = &cfg.bounds;
    bounds.validate()?;
    let n = model.n() as f64;
    let floor = bounds.sigma2.0;
    let incoming = bounds.clamp(*incoming);

    let spectral_in = model.spectral(incoming.beta)?;
    let q_in = spectral_in.project(moments);
    let incoming_objective = spectral_in.objective(incoming.gamma_tilde, &q_in, floor);
    let (residual_in, _) = spectral_in.residual_and_logdet(incoming.gamma_tilde, &q_in);

    let best: RefCell<Option<ProfilePoint>> = RefCell::new(None);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let profile = |log_beta: f64| -> f64 {
        let beta = log_beta.exp();
        let eval = model.spectral(beta).and_then(|sp| {
            let q = sp.project(moments);
            profile_in_gamma(&sp, &q, bounds)
        });
        match eval {
            Ok((gamma_tilde, objective, residual)) => {
                let mut slot = best.borrow_mut();
                if slot.as_ref().is_none_or(|b| objective < b.objective) {
                    *slot = Some(ProfilePoint {
                        beta,
                        gamma_tilde,
                        objective,
                        residual,
                    });
                }
                objective
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::INFINITY
            }
        }
    };

    let (blo, bhi) = (bounds.beta.0.ln(), bounds.beta.1.ln());
    let (lo, hi, grid_points) = match search {
        BetaSearch::Global => (
            cfg.beta_grid.0.ln().max(blo),
            cfg.beta_grid.1.ln().min(bhi),
            cfg.grid_points.max(2),
        ),
        BetaSearch::Local => {
            let half = cfg.local_decades * std::f64::consts::LN_10;
            let centre = incoming.beta.ln();
            ((centre - half).max(blo), (centre + half).min(bhi), 3)
        }
    };
    let search_opts = ScalarSearch {
        grid_points,
        xtol: 1e-3,
        max_iters: 60,
    };
    let _ = minimize_scalar(profile, lo, hi, search_opts)?;
    if let Some(e) = failure.into_inner() {
        if best.borrow().is_none() {
            return Err(e);
        }
    }

    let chosen = best.into_inner().filter(|p| p.objective < incoming_objective);
    let (gamma_tilde, beta, objective, residual) = match chosen {
        Some(p) => (p.gamma_tilde, p.beta, p.objective, p.residual),
        None => (incoming.gamma_tilde, incoming.beta, incoming_objective, residual_in),
    };
    let sigma2 = (residual / n).clamp(bounds.sigma2.0, bounds.sigma2.1);
    Ok(MStep {
        rho: HyperParams {
            gamma_tilde,
            beta,
            sigma2,
        },
        objective,
        incoming_objective,
    })
}

/// Marginal covariance `S_ρ = σ² (K_β/γ̃ + I)`.
pub fn marginal_covariance(model: &GramModel, rho: &HyperParams) -> Result<DMatrix<f64>> {
    let k = model.gram(rho.beta)?;
    Ok(add_diagonal(&(k / rho.gamma_tilde), 1.0) * rho.sigma2)
}

/// One row of the optimizer trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperTraceRow {
    pub iteration: usize,
    pub gamma_tilde: f64,
    pub beta: f64,
    pub sigma2: f64,
    pub objective: f64,
}

/// Result of [`optimize_hyperparams`].
#[derive(Debug, Clone, PartialEq)]
pub struct HyperFit {
    pub rho: HyperParams,
    pub trace: Vec<HyperTraceRow>,
    pub converged: bool,
}

/// Result of a single EM step.
#[derive(Debug, Clone)]
pub struct HyperStep {
    pub rho: HyperParams,
    pub objective: f64,
    pub incoming_objective: f64,
    pub second_moment: SecondMoment,
    /// Final Gibbs chain position, reusable as the next starting point.
    pub chain_state: Vec<f64>,
}

fn step_seed(seed: u64, iteration: usize) -> u64 {
    seed ^ (iteration as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One EM step: `Q̄` by Gibbs sampling at `rho`, then the M-step.
pub fn hyper_em_step(
    model: &GramModel,
    bounds: &BoxRegion,
    rho: &HyperParams,
    cfg: &HyperEmConfig,
    iteration: usize,
    chain_start: Option<Vec<f64>>,
    search: BetaSearch,
) -> Result<HyperStep> {
    if bounds.dim() != model.n() {
        return Err(Error::Dimension(format!(
            "{} bands for N = {} samples",
            bounds.dim(),
            model.n()
        )));
    }
    let cov = marginal_covariance(model, rho)?;
    let mut sampler = GibbsSampler::new(&cov, bounds.clone(), step_seed(cfg.seed, iteration))?;
    if let Some(state) = chain_start {
        sampler.set_state(state)?;
    }
    let samples = sampler.run(cfg.n_samples.max(1), cfg.burn_in);
    let second_moment = SecondMoment::from_samples(&samples)?;
    let step = m_step(model, Moments::Matrix(&second_moment.q), rho, cfg, search)?;
    Ok(HyperStep {
        rho: step.rho,
        objective: step.objective,
        incoming_objective: step.incoming_objective,
        second_moment,
        chain_state: sampler.state().to_vec(),
    })
}

/// Runs EM steps until the relative change of ρ drops below `cfg.tol` or
/// `cfg.max_iter` steps were taken.
pub fn optimize_hyperparams(model: &GramModel, bounds: &BoxRegion, h: f64, cfg: &HyperEmConfig) -> Result<HyperFit> {
    cfg.bounds.validate()?;
    let mut rho = cfg.bounds.clamp(cfg.initial.unwrap_or_else(|| HyperParams::initial(h)));
    let mut trace = Vec::new();
    let mut chain = None;
    let mut converged = false;
    for iteration in 0..cfg.max_iter {
        let search = if iteration == 0 {
            BetaSearch::Global
        } else {
            BetaSearch::Local
        };
        let step = hyper_em_step(model, bounds, &rho, cfg, iteration, chain.take(), search)?;
        trace.push(HyperTraceRow {
            iteration: iteration + 1,
            gamma_tilde: step.rho.gamma_tilde,
            beta: step.rho.beta,
            sigma2: step.rho.sigma2,
            objective: step.objective,
        });
        let change = step.rho.relative_change(&rho);
        rho = step.rho;
        chain = Some(step.chain_state);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(HyperFit { rho, trace, converged })
}

/// One-shot Empirical-Bayes fit to point data `z` (`Q̄ = z zᵀ`), used by the
/// Riemann and oracle baselines.
pub fn fit_point_data(model: &GramModel, z: &DVector<f64>, initial: &HyperParams, cfg: &HyperEmConfig) -> Result<HyperFit> {
    let step = m_step(model, Moments::Vector(z), initial, cfg, BetaSearch::Global)?;
    let rho = step.rho;
    Ok(HyperFit {
        rho,
        trace: vec![HyperTraceRow {
            iteration: 1,
            gamma_tilde: rho.gamma_tilde,
            beta: rho.beta,
            sigma2: rho.sigma2,
            objective: step.objective,
        }],
        converged: true,
    })
}

/// Writes the optimizer trace as CSV `iteration,gamma_tilde,beta,sigma2,objective`.
pub fn write_hyper_trace_csv<W: Write>(trace: &[HyperTraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> GramModel {
        let u = [1.0, -0.5, 0.3, 0.8, -1.2, 0.4];
        GramModel::new(InputMatrix::from_samples(&u), 1, 0.5).unwrap()
    }

    #[test]
    fn stacked_qr_trivial_cases() {
        let n = 4;
        let b = stacked_qr(&DMatrix::identity(n, n), &DMatrix::zeros(n, n)).unwrap();
        assert!((b.r1.clone() - DMatrix::identity(n, n) * 2f64.sqrt()).norm() < 1e-14);
        assert!(b.r2.norm() < 1e-14);
        let c = DMatrix::from_fn(n, n, |i, j| (i * 3 + j) as f64 - 4.0);
        let b = stacked_qr(&DMatrix::zeros(n, n), &c).unwrap();
        assert!((b.r1 - DMatrix::identity(n, n)).norm() < 1e-14);
        assert!(b.r2.norm() < 1e-12);
    }

    #[test]
    fn qr_routes_agree() {
        let phi_l = DMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.4);
        let c = DMatrix::from_fn(5, 2, |i, j| (i as f64 - j as f64) * 0.7);
        let a = stacked_qr(&phi_l, &c).unwrap();
        let b = r_blocks(&phi_l, &c).unwrap();
        assert!((a.r1 - b.r1).norm() < 1e-12);
        assert!((a.r2 - b.r2).norm() < 1e-12);
    }

    #[test]
    fn spectral_route_matches_r_blocks() {
        let model = small_model();
        let c = DMatrix::from_fn(6, 6, |i, j| if i >= j { 0.3 + 0.1 * (i + 2 * j) as f64 } else { 0.0 });
        let q = &c * c.transpose();
        for &(g, b) in &[(0.5, 1.0), (3.0, 0.2), (0.01, 4.0)] {
            let direct = em_objective(&model, g, b, &c).unwrap();
            let sp = model.spectral(b).unwrap();
            let proj = sp.project(Moments::Matrix(&q));
            let spectral = sp.objective(g, &proj, 0.0);
            assert!((direct - spectral).abs() < 1e-9 * direct.abs().max(1.0), "{direct} vs {spectral}");
            let s2 = sigma2_update(&model, g, b, &c).unwrap();
            let (res, _) = sp.residual_and_logdet(g, &proj);
            assert!((s2 - res / 6.0).abs() < 1e-12 * s2);
        }
    }

    #[test]
    fn zero_input_objective_reduces_to_norm() {
        let model = GramModel::new(InputMatrix::from_samples(&[0.0; 4]), 1, 0.1).unwrap();
        let c = DMatrix::from_fn(4, 4, |i, j| if i >= j { 1.0 + (i + j) as f64 } else { 0.0 });
        let j = em_objective(&model, 2.0, 1.0, &c).unwrap();
        assert!((j - 4.0 * c.norm_squared().ln()).abs() < 1e-12);
    }

    #[test]
    fn m_step_never_increases_objective() {
        let model = small_model();
        let z = DVector::from_vec(vec![0.4, -0.1, 0.2, 0.9, -0.7, 0.1]);
        let rho = HyperParams::new(0.7, 2.0, 0.1).unwrap();
        let cfg = HyperEmConfig::default();
        let step = m_step(&model, Moments::Vector(&z), &rho, &cfg, BetaSearch::Global).unwrap();
        assert!(step.objective <= step.incoming_objective);
        assert!(cfg.bounds.contains(&step.rho));
    }

    #[test]
    fn zero_iterations_returns_initial() {
        let model = small_model();
        let bx = BoxRegion::new(vec![0.0; 6], vec![1.0; 6]).unwrap();
        let cfg = HyperEmConfig {
            max_iter: 0,
            ..Default::default()
        };
        let fit = optimize_hyperparams(&model, &bx, 1.0, &cfg).unwrap();
        assert_eq!(fit.rho, HyperParams::initial(1.0));
        assert!(fit.trace.is_empty());
    }
}
