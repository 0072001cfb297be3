//! Fuzz oracles for the complement polar identity and the scaling
//! inequalities used by the stationarity measure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{nuclear_norm, sym_pow, thin_qr, Mat, Vector};
use crate::polar::polar_exact;

fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Random SPD matrix with eigenvalues log-uniform in `[1, cond]`.
pub fn random_spd(n: usize, cond: f64, rng: &mut ChaCha8Rng) -> Mat {
    let q = thin_qr(&randn(n, n, rng)).expect("square gaussian").q;
    let d = Vector::from_fn(n, |_, _| cond.powf(rng.random::<f64>()));
    &q * Mat::from_diagonal(&d) * q.transpose()
}

/// Largest elementwise difference between
/// `polar(L^{-1/2} G U⊥) U⊥ᵀ` and `L^{-1/2} G U⊥ (U⊥ᵀ Gᵀ L⁻¹ G U⊥)^{†/2} U⊥ᵀ`.
pub fn polar_identity_residual(l: &Mat, g: &Mat, u_perp: &Mat) -> f64 {
    if u_perp.ncols() == 0 {
        return 0.0;
    }
    let li = sym_pow(l, -0.5, 0.0).expect("SPD left factor");
    let x = li * g * u_perp;
    let lhs = polar_exact(&x, 1e-12) * u_perp.transpose();
    let gram = x.transpose() * &x;
    let cutoff = 1e-12 * gram.norm();
    let rhs = &x * sym_pow(&gram, -0.5, cutoff).expect("gram is symmetric") * u_perp.transpose();
    (lhs - rhs).amax()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub trials: usize,
    pub passed: usize,
    pub worst: f64,
    pub tol: f64,
}

impl FuzzReport {
    pub fn ok(&self) -> bool {
        self.passed == self.trials
    }

    fn collect(values: Vec<f64>, tol: f64) -> Self {
        Self {
            trials: values.len(),
            passed: values.iter().filter(|&&v| v <= tol).count(),
            worst: values.iter().copied().fold(0.0, f64::max),
            tol,
        }
    }
}

/// Random triples with `m, n ∈ [2, 12]`, `r ∈ [0, n)`, `cond(L) ≤ 10³`.
pub fn polar_identity_fuzz(trials: usize, seed: u64, tol: f64) -> FuzzReport {
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let m = rng.random_range(2..=12);
            let n = rng.random_range(2..=12);
            let r = rng.random_range(0..n);
            let l = random_spd(m, 1e3, &mut rng);
            let g = randn(m, n, &mut rng);
            let q = thin_qr(&randn(n, n, &mut rng)).expect("square gaussian").q;
            let u_perp = q.columns(r, n - r).into_owned();
            polar_identity_residual(&l, &g, &u_perp)
        })
        .collect();
    FuzzReport::collect(values, tol)
}

/// Worst relative violation of `‖L^{-1/2}X‖_* ≥ Θ^{-1/2}‖X‖_*` and
/// `‖L^{-1/4}X‖_F² ≥ Θ^{-1/2}‖X‖_F²` with `Θ = λ_max(L)`; `≤ 0` means both hold.
pub fn scaling_violation(l: &Mat, x: &Mat) -> f64 {
    let theta = l.symmetric_eigenvalues().max();
    let half = sym_pow(l, -0.5, 0.0).expect("SPD");
    let quarter = sym_pow(l, -0.25, 0.0).expect("SPD");
    let nuc = nuclear_norm(x);
    let fro = x.norm_squared();
    let a = (nuc / theta.sqrt() - nuclear_norm(&(half * x))) / nuc;
    let b = (fro / theta.sqrt() - (quarter * x).norm_squared()) / fro;
    a.max(b)
}

pub fn scaling_fuzz(trials: usize, seed: u64) -> FuzzReport {
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let m = rng.random_range(1..=10);
            let n = rng.random_range(1..=10);
            let scale = 10f64.powf(rng.random_range(-3.0..3.0));
            let l = random_spd(m, 1e4, &mut rng) * scale;
            scaling_violation(&l, &randn(m, n, &mut rng))
        })
        .collect();
    FuzzReport::collect(values, 1e-12)
}
