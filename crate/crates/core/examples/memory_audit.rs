//! Stored element counts of Pro-KLShampoo against KL-Shampoo.

use pro_klshampoo::baselines::init_klshampoo;
use pro_klshampoo::harness::audit::{memory_audit_klshampoo, memory_audit_pro};
use pro_klshampoo::linalg::Mat;
use pro_klshampoo::state::{init_state, Hyper};

fn main() -> pro_klshampoo::error::Result<()> {
    for (m, n, r) in [(4, 10, 2), (64, 256, 8), (256, 64, 8), (128, 128, 16)] {
        let h = Hyper {
            rank: r,
            ..Hyper::default()
        };
        let g = Mat::from_fn(m, n, |i, j| ((i * 7 + j * 3) as f64).sin());
        let pro = memory_audit_pro(&init_state(&g, &h)?);
        let kl = memory_audit_klshampoo(&init_klshampoo(m, n, &h)?);
        pro.check()?;
        kl.check()?;
        println!(
            "{m:>4} x {n:<4} r={r:<3} pro {:>7}  kl-shampoo {:>7}  ratio {:.3}",
            pro.counted(),
            kl.counted(),
            pro.counted() as f64 / kl.counted() as f64
        );
    }
    Ok(())
}
