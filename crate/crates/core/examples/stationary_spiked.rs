//! Population KL stationary points of a spiked gradient model: full and
//! restricted, with the stationary trace identities.

use pro_klshampoo::kl_analysis::measure::sigma_p_stationary_check;
use pro_klshampoo::kl_analysis::{solve_full_stationary, SolverConfig, SpikedModel};
use pro_klshampoo::linalg::sym_eig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pro_klshampoo::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = SpikedModel::random(6, 10, 2, 1.5, 0.5, &mut rng)?;
    let cfg = SolverConfig::default();

    let full = solve_full_stationary(&model, &cfg)?;
    let r_eig = sym_eig(&full.rhat.dense())?;
    println!("full: {} sweeps, residual {:.1e}", full.iterations, full.residual());
    println!("R* spectrum: {:.4?}", r_eig.values.as_slice());

    let u = r_eig.basis.columns(0, 3).into_owned();
    let rep = sigma_p_stationary_check(&model, &u, &cfg)?;
    println!(
        "restricted r=3: sigma_P^2 = {:.8} (mn = {}), Tr(S^-1 U'PhiU) = {:.8} (mr = {})",
        rep.sigma_p, rep.reference, rep.subspace_trace, rep.subspace_reference
    );
    Ok(())
}
