//! Every optimizer in the crate on the same two-layer classifier.

use pro_klshampoo::harness::{run, Optimizer, RunConfig, Task, TaskKind};
use pro_klshampoo::state::Hyper;

fn main() -> pro_klshampoo::error::Result<()> {
    let task = Task {
        kind: TaskKind::TwoLayerMlp {
            input: 16,
            hidden: 32,
            classes: 4,
            samples: 256,
        },
        noise: 0.1,
        seed: 3,
    };
    let runs = [
        (Optimizer::Pro, 0.02),
        (Optimizer::SmokHop, 0.02),
        (Optimizer::SubspaceOnly, 0.5),
        (Optimizer::ComplementOnly, 0.02),
        (Optimizer::Klshampoo, 0.02),
        (Optimizer::Muon, 0.02),
        (Optimizer::Adam, 0.01),
    ];
    for (optimizer, lr) in runs {
        let cfg = RunConfig {
            task: task.clone(),
            optimizer,
            hyper: Hyper {
                lr,
                rank: 4,
                ..Hyper::default()
            },
            steps: 200,
            batch: 64,
            eval_every: 200,
            seed: 1,
            polar: None,
            csv: None,
            checkpoint: None,
            parallel: true,
            wallclock: false,
        };
        let out = run(&cfg)?;
        println!(
            "{:<16} loss {:.4} -> {:.4}",
            format!("{optimizer:?}"),
            out.initial_loss(),
            out.final_loss()
        );
    }
    Ok(())
}
