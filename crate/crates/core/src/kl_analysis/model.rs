//! Rank-ρ signal plus noise gradient model with closed-form whitened
//! second moments.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_spd, sym_pow, Mat};

/// Which side's whitened second moment to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// `E[G P⁻¹ Gᵀ]` (m × m), with `P⁻¹` an `n × n` weight.
    Left,
    /// `E[Gᵀ P⁻¹ G]` (n × n), with `P⁻¹` an `m × m` weight.
    Right,
}

/// `G = A Bᵀ + ξ` with `E[ξ_ij ξ_i'j'] = σ² (Σ_L)_ii' (Σ_R)_jj'`.
///
/// The noise factors default to the identity (i.i.d. noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedModel {
    #[serde(with = "crate::serde_mat")]
    pub signal_left: Mat,
    #[serde(with = "crate::serde_mat")]
    pub signal_right: Mat,
    pub noise_sigma: f64,
    pub noise_left: Option<NoiseFactor>,
    pub noise_right: Option<NoiseFactor>,
}

/// SPD noise covariance factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFactor(#[serde(with = "crate::serde_mat")] pub Mat);

impl SpikedModel {
    pub fn new(a: Mat, b: Mat, sigma: f64) -> Result<Self> {
        let (m, rho) = a.shape();
        let (n, rho_b) = b.shape();
        if rho != rho_b {
            return Err(Error::Shape {
                context: "signal factors",
                expected: (n, rho),
                actual: b.shape(),
            });
        }
        if rho >= m.min(n) {
            return Err(Error::Config(format!(
                "signal rank {rho} must be below min(m, n) = {}",
                m.min(n)
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            signal_left: a,
            signal_right: b,
            noise_sigma: sigma,
            noise_left: None,
            noise_right: None,
        })
    }

    /// Replace the identity noise factors by SPD `Σ_L` (m × m) and `Σ_R` (n × n).
    pub fn with_separable_noise(mut self, sigma_l: Mat, sigma_r: Mat) -> Result<Self> {
        let (m, n) = self.dims();
        for (context, s, d) in [("noise_left", &sigma_l, m), ("noise_right", &sigma_r, n)] {
            if s.shape() != (d, d) {
                return Err(Error::Shape {
                    context,
                    expected: (d, d),
                    actual: s.shape(),
                });
            }
            if !is_spd(s) {
                return Err(Error::NotSpd);
            }
        }
        self.noise_left = Some(NoiseFactor(sigma_l));
        self.noise_right = Some(NoiseFactor(sigma_r));
        Ok(self)
    }

    /// Gaussian signal factors scaled by `signal_scale`, i.i.d. noise.
    pub fn random<R: Rng + ?Sized>(
        m: usize,
        n: usize,
        rho: usize,
        signal_scale: f64,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let a = Mat::from_fn(m, rho, |_, _| StandardNormal.sample(rng)) * signal_scale;
        let b = Mat::from_fn(n, rho, |_, _| StandardNormal.sample(rng));
        Self::new(a, b, sigma)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.signal_left.nrows(), self.signal_right.nrows())
    }

    pub fn rank(&self) -> usize {
        self.signal_left.ncols()
    }

    pub fn noise_left(&self) -> Mat {
        let m = self.dims().0;
        self.noise_left.as_ref().map_or_else(|| Mat::identity(m, m), |f| f.0.clone())
    }

    pub fn noise_right(&self) -> Mat {
        let n = self.dims().1;
        self.noise_right.as_ref().map_or_else(|| Mat::identity(n, n), |f| f.0.clone())
    }

    /// Closed-form whitened second moment.
    ///
    /// `Left`: `A (Bᵀ W B) Aᵀ + σ² Tr(W Σ_R) Σ_L` for an `n × n` weight `W`.
    /// `Right`: `B (Aᵀ W A) Bᵀ + σ² Tr(W Σ_L) Σ_R` for an `m × m` weight `W`.
    pub fn expected_whitened(&self, side: Side, weight: &Mat) -> Mat {
        let (a, b) = (&self.signal_left, &self.signal_right);
        let s2 = self.noise_sigma * self.noise_sigma;
        match side {
            Side::Left => {
                let core = b.transpose() * weight * b;
                a * core * a.transpose()
                    + self.noise_left() * (s2 * (weight * self.noise_right()).trace())
            }
            Side::Right => {
                let core = a.transpose() * weight * a;
                b * core * b.transpose()
                    + self.noise_right() * (s2 * (weight * self.noise_left()).trace())
            }
        }
    }

    /// The signal `A Bᵀ`, which is also the mean gradient.
    pub fn mean(&self) -> Mat {
        &self.signal_left * self.signal_right.transpose()
    }

    /// One Gaussian draw `A Bᵀ + σ Σ_L^{1/2} Z Σ_R^{1/2}`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Mat {
        let (m, n) = self.dims();
        let z = Mat::from_fn(m, n, |_, _| StandardNormal.sample(rng));
        let mut noise = z * self.noise_sigma;
        if let Some(f) = &self.noise_left {
            noise = sym_pow(&f.0, 0.5, 0.0).expect("validated SPD") * noise;
        }
        if let Some(f) = &self.noise_right {
            noise *= sym_pow(&f.0, 0.5, 0.0).expect("validated SPD");
        }
        self.mean() + noise
    }
}
