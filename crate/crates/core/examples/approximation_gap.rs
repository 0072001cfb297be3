//! Gap between the restricted and full KL optima as the tail gets rougher.

use pro_klshampoo::kl_analysis::{approximation_gap, SolverConfig, SpikedModel};
use pro_klshampoo::linalg::{Mat, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pro_klshampoo::error::Result<()> {
    let (m, n, r) = (6, 10, 3);
    for spread in [0.0, 0.1, 0.3, 0.6] {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = SpikedModel::random(m, n, 2, 1.0, 0.7, &mut rng)?;
        let tail = Vector::from_fn(n, |i, _| 10f64.powf(spread * (i as f64 / (n - 1) as f64 - 0.5)));
        let model = base.with_separable_noise(Mat::identity(m, m), Mat::from_diagonal(&tail))?;
        let rep = approximation_gap(&model, r, &SolverConfig::default())?;
        println!(
            "spread {spread:.1}: gap {:.3e} <= bound {:.3e} (tail AM/GM {:.4})",
            rep.gap,
            rep.bound,
            rep.tail_am / rep.tail_gm
        );
    }
    Ok(())
}
