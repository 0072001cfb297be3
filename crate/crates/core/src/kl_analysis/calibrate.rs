//! Bracket on the subspace mixing weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::aspect_scale;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBracket {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub lower: f64,
    pub upper: f64,
    /// `c_a = √max(1, m/n)`.
    pub aspect: f64,
    /// `k = min(m̄, n̄ − r)`, the almost-sure rank of the complement.
    pub k: usize,
}

/// `c_a/√(m̄(n̄−r)) ≤ α* ≤ c_a√k/√(m̄(n̄−r))` with `m̄ = min(m, n)`,
/// `n̄ = max(m, n)`. The upper end is the Frobenius-matching value; the
/// bracket's multiplicative width is `√k`.
pub fn alpha_bracket(m: usize, n: usize, r: usize) -> Result<AlphaBracket> {
    if m == 0 || n == 0 {
        return Err(Error::Config(format!("empty shape {m}x{n}")));
    }
    let (small, large) = (m.min(n), m.max(n));
    if r >= large {
        return Err(Error::Config(format!("rank {r} must be below max(m, n) = {large}")));
    }
    let aspect = aspect_scale(m, n);
    let k = small.min(large - r);
    let lower = aspect / ((small * (large - r)) as f64).sqrt();
    Ok(AlphaBracket {
        m,
        n,
        r,
        lower,
        upper: lower * (k as f64).sqrt(),
        aspect,
        k,
    })
}

/// Round to `digits` significant figures.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}
