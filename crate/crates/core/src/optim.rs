//! Bounded scalar minimization: a coarse grid locates the basin, then Brent's
//! method refines inside the bracketing grid cell.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::brent::BrentOpt;

use crate::error::{Error, Result};

/// Result of a scalar minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMin {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Options for [`minimize_scalar`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSearch {
    /// Number of grid points (at least 2; endpoints included).
    pub grid_points: usize,
    /// Absolute tolerance on `x` for the Brent refinement.
    pub xtol: f64,
    pub max_iters: u64,
}

impl Default for ScalarSearch {
    fn default() -> Self {
        Self {
            grid_points: 8,
            xtol: 1e-4,
            max_iters: 100,
        }
    }
}

struct Objective<'a, F> {
    f: &'a F,
    evals: std::cell::Cell<usize>,
}

impl<F: Fn(f64) -> f64> CostFunction for Objective<'_, F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, x: &f64) -> std::result::Result<f64, argmin::core::Error> {
        self.evals.set(self.evals.get() + 1);
        Ok(finite_or_max((self.f)(*x)))
    }
}

fn finite_or_max(v: f64) -> f64 {
    if v.is_nan() {
        f64::MAX
    } else {
        v.min(f64::MAX)
    }
}

/// Minimizes `f` over `[lo, hi]`. Non-finite values are treated as `+∞`.
pub fn minimize_scalar<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, opts: ScalarSearch) -> Result<ScalarMin> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("invalid search interval [{lo}, {hi}]")));
    }
    let m = opts.grid_points.max(2);
    let grid: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&x| finite_or_max(f(x))).collect();
    let best = (0..m)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("grid is non-empty");
    let mut result = ScalarMin {
        x: grid[best],
        value: values[best],
        evaluations: m,
    };
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(m - 1)];
    if b - a <= opts.xtol {
        return Ok(result);
    }
    let problem = Objective {
        f: &f,
        evals: std::cell::Cell::new(0),
    };
    let solver = BrentOpt::new(a, b).set_tolerance(f64::EPSILON.sqrt(), opts.xtol);
    let state = Executor::new(problem, solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run()
        .map_err(|e| Error::invalid(format!("scalar search failed: {e}")))?;
    let evals = state.problem.problem.as_ref().map_or(0, |p| p.evals.get());
    result.evaluations += evals;
    let st = state.state();
    if let Some(&x) = st.get_best_param() {
        let v = st.get_best_cost();
        if v < result.value {
            result.x = x;
            result.value = v;
        }
    }
    Ok(result)
}
