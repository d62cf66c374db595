//! Box-truncated Gaussians: univariate moments and draws, and a coordinate-wise
//! Gibbs sampler used to estimate conditional second moments `E[z zᵀ | box]`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Open01};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::sampling::Bands;
use crate::special::{norm_cdf, norm_sf, truncated_std_mean};

/// Default number of retained Gibbs sweeps.
pub const DEFAULT_SAMPLES: usize = 1000;
/// Default number of discarded Gibbs sweeps.
pub const DEFAULT_BURN_IN: usize = 100;

/// Below this tail mass the inverse-CDF draw loses accuracy and the
/// exponential-proposal rejection sampler takes over.
const INVERSE_CDF_MIN_MASS: f64 = 1e-12;

/// `E[Z | a <= Z < b]` for `Z ~ N(mu, sigma²)`.
pub fn trunc_normal_mean(mu: f64, sigma: f64, a: f64, b: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(a < b) {
        return Err(Error::invalid(format!("empty interval [{a}, {b})")));
    }
    let lo = (a - mu) / sigma;
    let hi = (b - mu) / sigma;
    Ok((mu + sigma * truncated_std_mean(lo, hi)).clamp(a, b))
}

/// Draws `Z ~ N(0,1)` conditioned on `lo <= Z <= hi`.
pub fn sample_truncated_std<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    if hi <= 0.0 {
        return -sample_upper(rng, -hi, -lo);
    }
    if lo >= 0.0 {
        return sample_upper(rng, lo, hi);
    }
    // interval straddles 0: plain inverse CDF
    let u: f64 = rng.sample(Open01);
    let (pl, ph) = (norm_cdf(lo), norm_cdf(hi));
    let p = pl + u * (ph - pl);
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    x.clamp(lo, hi)
}

// draw on [lo, hi] with 0 <= lo
fn sample_upper<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let qa = norm_sf(lo);
    if qa > INVERSE_CDF_MIN_MASS {
        let qb = norm_sf(hi);
        let u: f64 = rng.sample(Open01);
        let p = qa - u * (qa - qb);
        let x = std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
        return x.clamp(lo, hi);
    }
    let width = hi - lo;
    if width * (2.0 * lo + width) < 2.0 {
        // narrow far-tail interval: uniform proposal, acceptance >= e^{-1}
        loop {
            let x = lo + width * rng.random::<f64>();
            let accept = (-0.5 * (x - lo) * (x + lo)).exp();
            if rng.random::<f64>() < accept {
                return x;
            }
        }
    }
    // translated-exponential proposal with the optimal rate
    let rate = 0.5 * (lo + (lo * lo + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let x = lo + e / rate;
        if x > hi {
            continue;
        }
        let accept = (-0.5 * (x - rate) * (x - rate)).exp();
        if rng.random::<f64>() < accept {
            return x;
        }
    }
}

/// Axis-aligned box `lower <= z < upper`. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "{} lower bounds vs {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
            return Err(Error::invalid(format!(
                "box coordinate {i} is empty: [{}, {})",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn from_bands(bands: &Bands) -> Self {
        let upper = (0..bands.len()).map(|i| bands.upper(i)).collect();
        Self {
            lower: bands.lower.clone(),
            upper,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &u))| l <= v && v < u)
    }

    /// A point inside the box: midpoints where finite, otherwise the bound
    /// plus or minus one unit (or 0 for an unbounded coordinate).
    pub fn interior_point(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| match (l.is_finite(), u.is_finite()) {
                (true, true) => 0.5 * (l + u),
                (true, false) => l.max(0.0),
                (false, true) => (u - 1.0).min(0.0),
                (false, false) => 0.0,
            })
            .collect()
    }

    /// Pulls a value back into `[lower, upper)` if rounding pushed it out.
    fn confine(&self, i: usize, v: f64) -> f64 {
        if v < self.lower[i] {
            self.lower[i]
        } else if v >= self.upper[i] {
            let below = self.upper[i].next_down();
            below.max(self.lower[i])
        } else {
            v
        }
    }
}

/// Coordinate-wise Gibbs sampler for `N(0, cov)` restricted to a box.
pub struct GibbsSampler {
    precision: DMatrix<f64>,
    cond_sd: Vec<f64>,
    bounds: BoxRegion,
    state: Vec<f64>,
    rng: ChaCha8Rng,
}

impl GibbsSampler {
    pub fn new(cov: &DMatrix<f64>, bounds: BoxRegion, seed: u64) -> Result<Self> {
        let n = bounds.dim();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Dimension(format!(
                "covariance is {}x{} but the box has {} coordinates",
                cov.nrows(),
                cov.ncols(),
                n
            )));
        }
        if (0..n).any(|i| !(cov[(i, i)] > 0.0)) {
            return Err(Error::NotPositiveDefinite("sampler covariance"));
        }
        let chol = Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite("sampler covariance"))?;
        let precision = chol.inverse();
        let cond_sd = (0..n).map(|i| precision[(i, i)].sqrt().recip()).collect();
        let state = bounds.interior_point();
        Ok(Self {
            precision,
            cond_sd,
            bounds,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Restarts the chain from `state`, which must lie in the box.
    pub fn set_state(&mut self, state: Vec<f64>) -> Result<()> {
        if state.len() != self.bounds.dim() || !self.bounds.contains(&state) {
            return Err(Error::invalid("chain state must lie inside the box"));
        }
        self.state = state;
        Ok(())
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    /// One full pass over all coordinates.
    pub fn sweep(&mut self) {
        let n = self.state.len();
        for i in 0..n {
            let col = self.precision.column(i);
            let p_ii = col[i];
            let mut acc = 0.0;
            for (j, &p) in col.iter().enumerate() {
                if j != i {
                    acc += p * self.state[j];
                }
            }
            let mean = -acc / p_ii;
            let sd = self.cond_sd[i];
            let lo = (self.bounds.lower[i] - mean) / sd;
            let hi = (self.bounds.upper[i] - mean) / sd;
            let z = sample_truncated_std(&mut self.rng, lo, hi);
            self.state[i] = self.bounds.confine(i, mean + sd * z);
        }
    }

    /// Runs `burn_in` sweeps, then records `n_samples` sweeps as rows.
    pub fn run(&mut self, n_samples: usize, burn_in: usize) -> DMatrix<f64> {
        for _ in 0..burn_in {
            self.sweep();
        }
        let n = self.state.len();
        let mut out = DMatrix::zeros(n_samples, n);
        for s in 0..n_samples {
            self.sweep();
            assert!(self.bounds.contains(&self.state), "Gibbs draw left the box");
            for (j, &v) in self.state.iter().enumerate() {
                out[(s, j)] = v;
            }
        }
        out
    }
}

/// Draws `n_samples × N` samples (one per row) from `N(0, cov)` truncated to `bounds`.
pub fn gibbs_sample_box(
    cov: &DMatrix<f64>,
    bounds: &BoxRegion,
    n_samples: usize,
    burn_in: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let mut sampler = GibbsSampler::new(cov, bounds.clone(), seed)?;
    Ok(sampler.run(n_samples, burn_in))
}

/// Monte Carlo estimate of `E[z zᵀ]` under a box-truncated Gaussian.
#[derive(Debug, Clone)]
pub struct SecondMoment {
    pub q: DMatrix<f64>,
    pub n_samples: usize,
}

impl SecondMoment {
    pub fn from_samples(samples: &DMatrix<f64>) -> Result<Self> {
        let s = samples.nrows();
        if s == 0 {
            return Err(Error::Empty("second moment needs at least one sample"));
        }
        let mut q = samples.transpose() * samples / s as f64;
        crate::kernel::symmetrize(&mut q);
        Ok(Self { q, n_samples: s })
    }

    /// Lower Cholesky factor `C` with `Q = C Cᵀ`. On failure a single jitter of
    /// `1e-10 * trace(Q)/N` is added to the diagonal.
    pub fn cholesky_factor(&self) -> Result<DMatrix<f64>> {
        if let Some(c) = Cholesky::new(self.q.clone()) {
            return Ok(c.unpack());
        }
        let n = self.q.nrows();
        let jitter = 1e-10 * self.q.trace() / n as f64;
        let mut q = self.q.clone();
        for i in 0..n {
            q[(i, i)] += jitter;
        }
        Cholesky::new(q)
            .map(Cholesky::unpack)
            .ok_or(Error::NotPositiveDefinite("second moment"))
    }
}

/// `E[z zᵀ]` for `z ~ N(0, cov)` truncated to `bounds`, from `n_samples` Gibbs sweeps.
pub fn second_moment(
    cov: &DMatrix<f64>,
    bounds: &BoxRegion,
    n_samples: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SecondMoment> {
    let samples = gibbs_sample_box(cov, bounds, n_samples, burn_in, seed)?;
    SecondMoment::from_samples(&samples)
}

/// Column means of a sample matrix.
pub fn sample_mean(samples: &DMatrix<f64>) -> DVector<f64> {
    let s = samples.nrows() as f64;
    samples.row_sum().transpose() / s
}
