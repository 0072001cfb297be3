//! KL-Shampoo fed a rank-3 spiked gradient stream develops a spike-and-flat
//! spectrum.

use pro_klshampoo::harness::verify::spike_reproduction_config;
use pro_klshampoo::harness::{dump_spectrum, run};

fn main() -> pro_klshampoo::error::Result<()> {
    let out = run(&spike_reproduction_config())?;
    let dump = dump_spectrum(&out.checkpoint, 8);
    for f in &dump.params[0].factors {
        let shown: Vec<String> = f.normalized.iter().take(12).map(|v| format!("{v:.2}")).collect();
        println!("{}: {} ...", f.factor, shown.join(" "));
    }
    Ok(())
}
