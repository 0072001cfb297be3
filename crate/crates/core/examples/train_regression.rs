//! Full training run through the harness, with CSV and checkpoint written to
//! a temporary directory.

use pro_klshampoo::harness::verify::regression_config;
use pro_klshampoo::harness::run;

fn main() -> pro_klshampoo::error::Result<()> {
    let dir = std::env::temp_dir().join("pro-klshampoo-example");
    let mut cfg = regression_config();
    cfg.csv = Some(dir.join("metrics.csv"));
    cfg.checkpoint = Some(dir.join("checkpoint.json"));
    let out = run(&cfg)?;
    for row in out.rows.iter().step_by(50) {
        println!(
            "step {:3}  loss {:.4e}  grad {:.3e}  measure {}",
            row.step,
            row.train_loss,
            row.grad_fro_norm,
            row.mixed_norm_measure.map_or("n/a".into(), |v| format!("{v:.3e}"))
        );
    }
    println!(
        "final/initial = {:.2e}; metrics in {}",
        out.final_loss() / out.initial_loss(),
        dir.display()
    );
    Ok(())
}
