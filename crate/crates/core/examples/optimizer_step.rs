//! Drive Pro-KLShampoo by hand on `f(W) = ½‖W − W*‖²` and look at the two
//! halves of the update.

use pro_klshampoo::linalg::{op_norm, Mat};
use pro_klshampoo::polar::PolarMode;
use pro_klshampoo::state::{init_state, Hyper};
use pro_klshampoo::step::pro_step;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> pro_klshampoo::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let target = Mat::from_fn(12, 20, |_, _| StandardNormal.sample(&mut rng));
    let mut w = Mat::zeros(12, 20);
    let h = Hyper {
        lr: 0.1,
        rank: 4,
        polar: PolarMode::Exact,
        ..Hyper::default()
    };
    let mut state = init_state(&(&w - &target), &h)?;
    for step in 1..=200 {
        let g = &w - &target;
        let report = pro_step(&mut w, &g, &mut state, &h)?;
        if step % 40 == 0 || step == 1 {
            let d = &report.decomposition;
            println!(
                "step {step:3}  loss {:.4e}  |res|_op {:.3}  |sub|_op {:.3e}  refreshed {}",
                0.5 * (&w - &target).norm_squared(),
                op_norm(&d.delta_res),
                op_norm(&d.delta_sub),
                report.refreshed,
            );
        }
    }
    let (lo, hi) = state.eigen_range();
    println!("eigenvalue range [{lo:.3e}, {hi:.3e}], mu_perp {:.3e}", state.mu_perp);
    Ok(())
}
