//! Orthogonalization: the exact polar factor and its Newton-Schulz approximation.

use serde::{Deserialize, Serialize};

use crate::linalg::{scale_columns, svd, Mat};

/// Default relative cutoff below which singular values count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Coefficients and iteration count of the Muon quintic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NsConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub iterations: usize,
    /// Added to `‖X‖_F` before pre-normalization.
    pub eps: f64,
}

impl Default for NsConfig {
    fn default() -> Self {
        Self {
            a: 3.4445,
            b: -4.7750,
            c: 2.0315,
            iterations: 5,
            eps: 1e-8,
        }
    }
}

impl NsConfig {
    /// The scalar map the iteration applies to each singular value.
    pub fn scalar_step(&self, x: f64) -> f64 {
        let x2 = x * x;
        x * (self.a + x2 * (self.b + self.c * x2))
    }
}

/// Which orthogonalization an optimizer step uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarMode {
    /// SVD-based polar factor (the idealized update).
    Exact,
    /// `iterations` steps of the Muon polynomial.
    NewtonSchulz,
}

impl PolarMode {
    pub fn apply(&self, m: &Mat, ns: &NsConfig) -> Mat {
        match self {
            PolarMode::Exact => polar_exact(m, DEFAULT_RANK_TOL),
            PolarMode::NewtonSchulz => newton_schulz(m, ns),
        }
    }
}

/// `U Vᵀ` over the singular triplets with `σᵢ > rank_tol·σ₁`.
///
/// The polar factor of the zero matrix is zero.
pub fn polar_exact(m: &Mat, rank_tol: f64) -> Mat {
    let (rows, cols) = m.shape();
    let s = svd(m);
    if s.sigma.is_empty() || s.sigma[0] == 0.0 {
        return Mat::zeros(rows, cols);
    }
    let cutoff = rank_tol * s.sigma[0];
    let mask = s.sigma.map(|x| if x > cutoff { 1.0 } else { 0.0 });
    &scale_columns(&s.u, &mask) * s.v.transpose()
}

/// Newton-Schulz orthogonalization `X ↦ aX + b(XXᵀ)X + c(XXᵀ)²X`, started
/// from `M / (‖M‖_F + eps)`.
///
/// Works on the orientation with the smaller Gram matrix and transposes back.
pub fn newton_schulz(m: &Mat, cfg: &NsConfig) -> Mat {
    let norm = m.norm();
    if norm == 0.0 {
        return Mat::zeros(m.nrows(), m.ncols());
    }
    let tall = m.nrows() > m.ncols();
    let mut x = if tall { m.transpose() } else { m.clone() };
    x /= norm + cfg.eps;
    for _ in 0..cfg.iterations {
        let gram = &x * x.transpose();
        let poly = &gram * cfg.b + &gram * &gram * cfg.c;
        x = &x * cfg.a + poly * &x;
    }
    if tall {
        x.transpose()
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{op_norm, orthogonality_error, sym_pow, thin_qr};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn polar_of_identity_and_zero() {
        let eye = Mat::identity(4, 4);
        assert!((polar_exact(&eye, DEFAULT_RANK_TOL) - &eye).amax() < 1e-14);
        assert_eq!(polar_exact(&Mat::zeros(3, 2), DEFAULT_RANK_TOL), Mat::zeros(3, 2));
        assert_eq!(newton_schulz(&Mat::zeros(3, 2), &NsConfig::default()), Mat::zeros(3, 2));
    }

    #[test]
    fn polar_is_scale_invariant() {
        let m = randn(5, 8, 1);
        let p = polar_exact(&m, DEFAULT_RANK_TOL);
        let q = polar_exact(&(&m * 37.5), DEFAULT_RANK_TOL);
        assert!((p - q).amax() < 1e-12);
    }

    #[test]
    fn polar_matches_pseudo_inverse_square_root() {
        let m = randn(5, 8, 2);
        let gram = m.transpose() * &m;
        let oracle = &m * sym_pow(&gram, -0.5, 1e-10).unwrap();
        assert!((polar_exact(&m, DEFAULT_RANK_TOL) - oracle).amax() < 1e-8);
    }

    #[test]
    fn polar_is_partial_isometry_with_right_support() {
        // rank-2 matrix whose row space lives in the first 4 coordinates
        let mut m = randn(5, 2, 3) * randn(2, 7, 4);
        for j in 4..7 {
            m.column_mut(j).fill(0.0);
        }
        let r = polar_exact(&m, DEFAULT_RANK_TOL);
        let s = crate::linalg::svd(&r).sigma;
        assert!((s[0] - 1.0).abs() < 1e-9 && (s[1] - 1.0).abs() < 1e-9);
        assert!(s.iter().skip(2).all(|x| x.abs() < 1e-9));
        let mut p = Mat::zeros(7, 7);
        for j in 0..4 {
            p[(j, j)] = 1.0;
        }
        assert!((&r * &p - &r).amax() < 1e-12);
        assert!(op_norm(&r) <= 1.0 + 1e-12);
    }

    #[test]
    fn newton_schulz_on_orthogonal_rows_follows_scalar_orbit() {
        let cfg = NsConfig::default();
        let q = thin_qr(&randn(6, 4, 5)).unwrap().q.transpose(); // 4x6, σ = 1
        let out = newton_schulz(&q, &cfg);
        // after normalization every σ equals 1/√4
        let mut x = 1.0 / (2.0 + cfg.eps);
        for _ in 0..cfg.iterations {
            x = cfg.scalar_step(x);
        }
        assert!((&out - &q * x).amax() < 1e-12);
        assert!((&out - &q).norm() <= 0.35 * 2.0);
    }

    #[test]
    fn newton_schulz_on_diagonal() {
        let cfg = NsConfig::default();
        let out = newton_schulz(&Mat::identity(2, 2), &cfg);
        let mut x = 1.0 / (2.0_f64.sqrt() + cfg.eps);
        for _ in 0..5 {
            x = cfg.scalar_step(x);
        }
        assert!(out[(0, 1)].abs() < 1e-15 && out[(1, 0)].abs() < 1e-15);
        assert!((out[(0, 0)] - x).abs() < 1e-14 && (out[(1, 1)] - x).abs() < 1e-14);
    }

    #[test]
    fn newton_schulz_close_to_exact_on_well_conditioned() {
        let cfg = NsConfig::default();
        for seed in 0..20 {
            let q1 = thin_qr(&randn(6, 6, 100 + seed)).unwrap().q;
            let q2 = thin_qr(&randn(6, 6, 200 + seed)).unwrap().q;
            let sig = nalgebra::DVector::from_fn(6, |i, _| 1.0 - 0.9 * i as f64 / 5.0);
            let m = &scale_columns(&q1, &sig) * q2.transpose();
            let gap = op_norm(&(newton_schulz(&m, &cfg) - polar_exact(&m, DEFAULT_RANK_TOL)));
            assert!(gap <= 0.35, "seed {seed}: {gap}");
        }
        assert!(orthogonality_error(&Mat::identity(2, 2)) == 0.0);
    }

    #[test]
    fn tall_and_wide_agree_under_transpose() {
        let cfg = NsConfig::default();
        let m = randn(7, 3, 6);
        let a = newton_schulz(&m, &cfg);
        let b = newton_schulz(&m.transpose(), &cfg).transpose();
        assert!((a - b).amax() < 1e-14);
    }
}
