//! Which eigen-subset should the restricted family keep? Not always the top one.

use pro_klshampoo::kl_analysis::subspace::{am_gm, optimal_subspace_bruteforce, subspace_optimality_check};
use pro_klshampoo::linalg::{Mat, Vector};

fn main() -> pro_klshampoo::error::Result<()> {
    let phi = Mat::from_diagonal(&Vector::from_vec(vec![10.0, 9.0, 1.0]));
    let best = optimal_subspace_bruteforce(&phi, 1)?;
    println!(
        "Diag(10, 9, 1), r = 1: keep eigenvalue {} (complement AM/GM {:.3}); keeping 10 gives {:.3}",
        best.eigenvalues[best.indices[0]],
        best.am_gm,
        am_gm(&[9.0, 1.0])
    );
    let check = subspace_optimality_check(&phi, 1, 5000, 0)?;
    println!(
        "best of {} random unit vectors: f = {:.6} vs eigen-subset f = {:.6}",
        check.trials, check.best_sample, check.choice.objective
    );
    Ok(())
}
