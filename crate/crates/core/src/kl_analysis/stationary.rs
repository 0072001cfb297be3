//! Fixed-point solvers for the full and restricted stationarity conditions.
//!
//! Both solvers alternate exact block minimizations of the KL objective
//! (each closed-form update minimizes it in one block with the others
//! fixed), so the objective never increases along the iteration. After each
//! sweep the gauge `(L, R̂) ↦ (cL, R̂/c)` is fixed by `Tr(L) = m`.

use serde::{Deserialize, Serialize};

use super::model::{Side, SpikedModel};
use super::objective::{kl_objective, RightFactor};
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, orthogonality_error, projector, symmetrize, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Largest relative residual accepted on return.
    pub tol: f64,
    pub max_iter: usize,
    /// Weight kept on the previous iterate (`0` = plain alternation).
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            damping: 0.0,
        }
    }
}

/// Relative residuals of the stationarity equations at a returned point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖L − E[G R̂⁻¹ Gᵀ]/n‖_F / ‖L‖_F`.
    pub l: f64,
    /// Full: `‖R − E[Gᵀ L⁻¹ G]/m‖_F / ‖R‖_F`. Restricted: the same for `S = UᵀΦ_L U/m`.
    pub right: f64,
    /// Restricted only: `|μ⊥ − Tr(P⊥Φ_L)/(m(n−r))| / μ⊥`.
    pub mu: Option<f64>,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.l.max(self.right).max(self.mu.unwrap_or(0.0))
    }
}

/// A converged stationary point with its objective (up to the model constant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPair {
    #[serde(with = "crate::serde_mat")]
    pub l: Mat,
    pub rhat: RightFactor,
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl StationaryPair {
    pub fn residual(&self) -> f64 {
        self.residuals.max()
    }
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / a.norm()
}

fn blend(old: &Mat, new: Mat, damping: f64) -> Mat {
    if damping == 0.0 {
        new
    } else {
        old * damping + new * (1.0 - damping)
    }
}

/// `E[G W Gᵀ]/n`.
fn left_target(model: &SpikedModel, r_inv: &Mat) -> Mat {
    let n = model.dims().1 as f64;
    symmetrize(&(model.expected_whitened(Side::Left, r_inv) / n))
}

/// `Φ_L = E[Gᵀ L⁻¹ G]`.
fn phi(model: &SpikedModel, l: &Mat) -> Result<Mat> {
    Ok(symmetrize(&model.expected_whitened(Side::Right, &inverse_spd(l)?)))
}

fn check_config(cfg: &SolverConfig) -> Result<()> {
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 || !(0.0..1.0).contains(&cfg.damping) {
        return Err(Error::Config(format!("invalid solver config {cfg:?}")));
    }
    Ok(())
}

pub fn full_residuals(model: &SpikedModel, l: &Mat, r: &Mat) -> Result<Residuals> {
    let m = model.dims().0 as f64;
    Ok(Residuals {
        l: rel(l, &left_target(model, &inverse_spd(r)?)),
        right: rel(r, &(phi(model, l)? / m)),
        mu: None,
    })
}

/// Alternate `L ← E[G R⁻¹ Gᵀ]/n`, `R ← E[Gᵀ L⁻¹ G]/m` from `L = I`, `R = I`.
pub fn solve_full_stationary(model: &SpikedModel, cfg: &SolverConfig) -> Result<StationaryPair> {
    check_config(cfg)?;
    let (m, n) = model.dims();
    let mut l = Mat::identity(m, m);
    let mut r = Mat::identity(n, n);
    for it in 1..=cfg.max_iter {
        l = blend(&l, left_target(model, &inverse_spd(&r)?), cfg.damping);
        r = blend(&r, phi(model, &l)? / m as f64, cfg.damping);
        let c = m as f64 / l.trace();
        l *= c;
        r /= c;
        let res = full_residuals(model, &l, &r)?;
        if !res.max().is_finite() {
            return Err(Error::NonFinite("full stationary iterate"));
        }
        if res.max() <= cfg.tol {
            let rhat = RightFactor::Full { r };
            return Ok(StationaryPair {
                objective: kl_objective(&l, &rhat, model)?,
                l,
                rhat,
                residuals: res,
                iterations: it,
            });
        }
    }
    let res = full_residuals(model, &l, &r)?;
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: res.max(),
    })
}

/// Closed-form `(S, μ⊥)` minimizing the objective for fixed `L` and `U`.
pub fn restricted_right(model: &SpikedModel, l: &Mat, u: &Mat) -> Result<(Mat, f64)> {
    let (m, n) = model.dims();
    let r = u.ncols();
    let ph = phi(model, l)?;
    let s = symmetrize(&(u.transpose() * &ph * u / m as f64));
    let p_perp = Mat::identity(n, n) - projector(u);
    let mu = (p_perp * ph).trace() / (m * (n - r)) as f64;
    Ok((s, mu))
}

pub fn restricted_residuals(
    model: &SpikedModel,
    l: &Mat,
    u: &Mat,
    s: &Mat,
    mu_perp: f64,
) -> Result<Residuals> {
    let (s_t, mu_t) = restricted_right(model, l, u)?;
    let rhat = RightFactor::Restricted {
        u: u.clone(),
        s: s.clone(),
        mu_perp,
    };
    Ok(Residuals {
        l: rel(l, &left_target(model, &rhat.inverse()?)),
        right: rel(s, &s_t),
        mu: Some((mu_perp - mu_t).abs() / mu_perp),
    })
}

fn check_basis(model: &SpikedModel, u: &Mat) -> Result<()> {
    let n = model.dims().1;
    if u.nrows() != n {
        return Err(Error::Shape {
            context: "subspace basis",
            expected: (n, u.ncols()),
            actual: u.shape(),
        });
    }
    if u.ncols() == 0 || u.ncols() >= n {
        return Err(Error::Config(format!(
            "restricted rank must satisfy 1 <= r < n = {n}, got {}",
            u.ncols()
        )));
    }
    let err = orthogonality_error(u);
    if err > 1e-10 {
        return Err(Error::Config(format!("basis is not orthonormal (error {err:.3e})")));
    }
    Ok(())
}

/// Restricted fixed point for a fixed orthonormal `U`, starting from `L = I`.
pub fn solve_restricted_stationary(
    model: &SpikedModel,
    u: &Mat,
    cfg: &SolverConfig,
) -> Result<StationaryPair> {
    let m = model.dims().0;
    solve_restricted_from(model, u, Mat::identity(m, m), cfg)
}

/// Restricted fixed point starting from a given `L`. Each sweep sets
/// `(S, μ⊥)` optimally for the current `L`, then `L ← E[G R̂⁻¹ Gᵀ]/n`.
pub fn solve_restricted_from(
    model: &SpikedModel,
    u: &Mat,
    l0: Mat,
    cfg: &SolverConfig,
) -> Result<StationaryPair> {
    check_config(cfg)?;
    check_basis(model, u)?;
    let m = model.dims().0;
    let mut l = l0;
    let (mut s, mut mu) = restricted_right(model, &l, u)?;
    for it in 1..=cfg.max_iter {
        let (s_new, mu_new) = restricted_right(model, &l, u)?;
        s = blend(&s, s_new, cfg.damping);
        mu = cfg.damping * mu + (1.0 - cfg.damping) * mu_new;
        let rhat = RightFactor::Restricted {
            u: u.clone(),
            s: s.clone(),
            mu_perp: mu,
        };
        l = blend(&l, left_target(model, &rhat.inverse()?), cfg.damping);
        let c = m as f64 / l.trace();
        l *= c;
        s /= c;
        mu /= c;
        let res = restricted_residuals(model, &l, u, &s, mu)?;
        if !res.max().is_finite() {
            return Err(Error::NonFinite("restricted stationary iterate"));
        }
        if res.max() <= cfg.tol {
            let rhat = RightFactor::Restricted {
                u: u.clone(),
                s,
                mu_perp: mu,
            };
            return Ok(StationaryPair {
                objective: kl_objective(&l, &rhat, model)?,
                l,
                rhat,
                residuals: res,
                iterations: it,
            });
        }
    }
    let res = restricted_residuals(model, &l, u, &s, mu)?;
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: res.max(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, thin_qr};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pure_noise_is_flat() {
        let model = SpikedModel::new(Mat::zeros(4, 1), Mat::zeros(6, 1), 0.8).unwrap();
        let pair = solve_full_stationary(&model, &SolverConfig::default()).unwrap();
        assert!((&pair.l - Mat::identity(4, 4)).amax() < 1e-12);
        let r = pair.rhat.dense();
        assert!((&r - Mat::identity(6, 6) * r[(0, 0)]).amax() < 1e-12);
        // L = I, R = cI: c = σ² Tr(L⁻¹)/m = σ²
        assert!((r[(0, 0)] - 0.64).abs() < 1e-12);
    }

    #[test]
    fn spike_and_flat_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = SpikedModel::random(6, 9, 2, 1.5, 0.7, &mut rng).unwrap();
        let pair = solve_full_stationary(&model, &SolverConfig::default()).unwrap();
        assert!(pair.residual() <= 1e-10);
        let r = pair.rhat.dense();
        let el = sym_eig(&pair.l).unwrap().values;
        let er = sym_eig(&r).unwrap().values;
        for i in 2..6 {
            assert!((el[i] - el[5]).abs() <= 1e-8 * el[0]);
        }
        for j in 2..9 {
            assert!((er[j] - er[8]).abs() <= 1e-8 * er[0]);
        }
        let floor = 0.49 * inverse_spd(&r).unwrap().trace() / 9.0;
        assert!((el[5] - floor).abs() <= 1e-8 * floor);
        // trace identity
        let phi = phi(&model, &pair.l).unwrap();
        let t = (inverse_spd(&r).unwrap() * phi).trace();
        assert!((t - 54.0).abs() < 1e-6);
    }

    #[test]
    fn damped_iteration_reaches_same_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = SpikedModel::random(4, 5, 1, 1.0, 0.5, &mut rng).unwrap();
        let plain = solve_full_stationary(&model, &SolverConfig::default()).unwrap();
        let damped = solve_full_stationary(
            &model,
            &SolverConfig {
                damping: 0.5,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert!(damped.iterations > plain.iterations);
        assert!((plain.objective - damped.objective).abs() < 1e-9);
        assert!((&plain.l - &damped.l).amax() < 1e-8);
    }

    #[test]
    fn non_convergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let model = SpikedModel::random(4, 5, 1, 1.0, 0.5, &mut rng).unwrap();
        let cfg = SolverConfig {
            max_iter: 1,
            tol: 1e-14,
            damping: 0.0,
        };
        assert!(matches!(
            solve_full_stationary(&model, &cfg),
            Err(Error::NonConvergence { iterations: 1, .. })
        ));
    }

    #[test]
    fn restricted_residuals_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let model = SpikedModel::random(4, 8, 3, 1.0, 0.6, &mut rng).unwrap();
        let u = thin_qr(&Mat::from_fn(8, 2, |i, j| ((i * 3 + j * 7) % 5) as f64 - 2.0))
            .unwrap()
            .q;
        let pair = solve_restricted_stationary(&model, &u, &SolverConfig::default()).unwrap();
        let RightFactor::Restricted { s, mu_perp, .. } = &pair.rhat else {
            panic!("expected restricted factor")
        };
        let res = restricted_residuals(&model, &pair.l, &u, s, *mu_perp).unwrap();
        assert!(res.max() <= 1e-10);
        assert!((pair.l.trace() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn restricted_with_single_leftover_direction() {
        // flat model, r = n − 1: μ⊥ is the leftover eigenvalue of R*
        let model = SpikedModel::new(Mat::zeros(3, 1), Mat::zeros(5, 1), 1.0).unwrap();
        let u = Mat::identity(5, 4);
        let pair = solve_restricted_stationary(&model, &u, &SolverConfig::default()).unwrap();
        let full = solve_full_stationary(&model, &SolverConfig::default()).unwrap();
        let RightFactor::Restricted { mu_perp, .. } = pair.rhat else {
            panic!()
        };
        let er = sym_eig(&full.rhat.dense()).unwrap().values;
        assert!((mu_perp - er[4]).abs() < 1e-10);
    }

    #[test]
    fn basis_validation() {
        let model = SpikedModel::new(Mat::zeros(3, 1), Mat::zeros(5, 1), 1.0).unwrap();
        let cfg = SolverConfig::default();
        assert!(solve_restricted_stationary(&model, &Mat::identity(5, 5), &cfg).is_err());
        assert!(solve_restricted_stationary(&model, &(Mat::identity(5, 2) * 2.0), &cfg).is_err());
        assert!(solve_restricted_stationary(&model, &Mat::identity(4, 2), &cfg).is_err());
    }
}
