//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Relative diagonal jitters tried, in order, when a Cholesky factorization
/// fails. Each is scaled by the mean diagonal entry of the matrix.
const JITTER_LADDER: [f64; 5] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Cholesky factorization with jitter escalation on failure.
pub fn jittered_cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows().max(1);
    let scale = (m.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    for rel in JITTER_LADDER {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += rel * scale;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Ok(c);
        }
    }
    Err(Error::NotPositiveDefinite(what))
}

/// `m + shift * I`.
pub fn add_diagonal(m: &DMatrix<f64>, shift: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..out.nrows().min(out.ncols()) {
        out[(i, i)] += shift;
    }
    out
}
