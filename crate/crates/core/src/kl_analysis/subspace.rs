//! Optimal tracked subspace: brute force over eigen-subsets and random
//! Stiefel sampling of the reduced objective.

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{logdet_spd, projector, sym_eig, thin_qr, Mat};

/// Largest dimension accepted by the subset enumeration.
pub const BRUTEFORCE_MAX_DIM: usize = 20;

/// Arithmetic over geometric mean of positive values.
pub fn am_gm(values: &[f64]) -> f64 {
    log_am_gm(values).exp()
}

fn log_am_gm(values: &[f64]) -> f64 {
    let k = values.len() as f64;
    let am = values.iter().sum::<f64>() / k;
    let log_gm = values.iter().map(|v| v.ln()).sum::<f64>() / k;
    am.ln() - log_gm
}

/// Reduced objective `log det(UᵀΦU) + (n−r) log Tr(P⊥Φ)`.
pub fn reduced_objective(phi: &Mat, u: &Mat) -> Result<f64> {
    let n = phi.nrows();
    let r = u.ncols();
    let p_perp = Mat::identity(n, n) - projector(u);
    let logdet = logdet_spd(&(u.transpose() * phi * u))?;
    Ok(logdet + (n - r) as f64 * (p_perp * phi).trace().ln())
}

/// Winner of the eigen-subset search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetChoice {
    /// Indices into the descending eigenvalue list, ascending.
    pub indices: Vec<usize>,
    /// AM/GM of the complementary eigenvalues.
    pub am_gm: f64,
    /// `f` on the chosen eigenspace.
    pub objective: f64,
    pub eigenvalues: Vec<f64>,
    #[serde(with = "crate::serde_mat")]
    pub basis: Mat,
}

/// Enumerate all size-`r` subsets of eigenvalue indices and keep the one
/// whose complement has the smallest AM/GM; the first subset in
/// lexicographic order wins ties.
pub fn optimal_subspace_bruteforce(phi: &Mat, r: usize) -> Result<SubsetChoice> {
    let n = phi.nrows();
    if n > BRUTEFORCE_MAX_DIM {
        return Err(Error::SizeLimit {
            n,
            limit: BRUTEFORCE_MAX_DIM,
        });
    }
    if r == 0 || r >= n {
        return Err(Error::Config(format!("subset size must satisfy 1 <= r < n = {n}, got {r}")));
    }
    let eig = sym_eig(phi)?;
    let values: Vec<f64> = eig.values.iter().copied().collect();
    if values[n - 1] <= 0.0 {
        return Err(Error::NotSpd);
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for subset in (0..n).combinations(r) {
        let rest: Vec<f64> = (0..n).filter(|i| !subset.contains(i)).map(|i| values[i]).collect();
        let score = log_am_gm(&rest);
        if best.as_ref().is_none_or(|(_, b)| score < *b) {
            best = Some((subset, score));
        }
    }
    let (indices, score) = best.expect("at least one subset");
    let basis = eig.basis.select_columns(&indices);
    Ok(SubsetChoice {
        objective: reduced_objective(phi, &basis)?,
        am_gm: score.exp(),
        indices,
        eigenvalues: values,
        basis,
    })
}

/// `f` on an eigen-subset from its eigenvalues alone:
/// `C₀ + (n−r) log(AM_J/GM_J)` with `C₀ = Σ log φᵢ + (n−r) log(n−r)`.
pub fn subset_objective(eigenvalues: &[f64], indices: &[usize]) -> f64 {
    let n = eigenvalues.len();
    let rest: Vec<f64> = (0..n).filter(|i| !indices.contains(i)).map(|i| eigenvalues[i]).collect();
    let free = rest.len() as f64;
    let c0 = eigenvalues.iter().map(|v| v.ln()).sum::<f64>() + free * free.ln();
    c0 + free * log_am_gm(&rest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceCheck {
    pub choice: SubsetChoice,
    pub trials: usize,
    /// Smallest `f` over the random Stiefel samples.
    pub best_sample: f64,
    /// `max(0, f(eigenspace) − min_samples f)`.
    pub max_violation: f64,
}

/// Compare `f` at the brute-force eigenspace with `trials` random Stiefel
/// points (Gaussian matrices orthonormalized by QR). Trial `i` uses seed
/// `seed + i`, so the result is independent of thread scheduling.
pub fn subspace_optimality_check(phi: &Mat, r: usize, trials: usize, seed: u64) -> Result<SubspaceCheck> {
    let choice = optimal_subspace_bruteforce(phi, r)?;
    let n = phi.nrows();
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let x = Mat::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng));
            let u = thin_qr(&x)?.q;
            reduced_objective(phi, &u)
        })
        .collect::<Result<_>>()?;
    let best_sample = samples.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SubspaceCheck {
        max_violation: (choice.objective - best_sample).max(0.0),
        best_sample,
        trials,
        choice,
    })
}
