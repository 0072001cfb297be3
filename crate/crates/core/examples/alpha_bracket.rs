//! Mixing-weight brackets for common transformer layer shapes at r = 128.

use pro_klshampoo::harness::verify::BRACKET_TABLE;
use pro_klshampoo::kl_analysis::alpha_bracket;
use pro_klshampoo::kl_analysis::calibrate::round_sig;

fn main() -> pro_klshampoo::error::Result<()> {
    println!("{:>5} {:>5} {:>4} {:>6} {:>5}  bracket", "m", "n", "r", "c_a", "k");
    for (m, n, r, _, _) in BRACKET_TABLE.iter().take(6) {
        let b = alpha_bracket(*m, *n, *r)?;
        println!(
            "{m:>5} {n:>5} {r:>4} {:>6.3} {:>5}  [{}, {}]",
            b.aspect,
            b.k,
            round_sig(b.lower, 2),
            round_sig(b.upper, 2)
        );
    }
    Ok(())
}
