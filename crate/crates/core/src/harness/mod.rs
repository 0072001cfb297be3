//! Desk-scale experiment driver: synthetic tasks, training runs, spectrum
//! dumps, memory audits and verification suites.

pub mod audit;
pub mod optim;
pub mod run;
pub mod spectrum;
pub mod task;
pub mod verify;

pub use audit::{memory_audit_klshampoo, memory_audit_pro, MemoryReport};
pub use optim::{Optimizer, ParamState};
pub use run::{run, Checkpoint, RunConfig, RunOutcome};
pub use spectrum::{dump_spectrum, SpectrumDump};
pub use task::{Task, TaskKind};
pub use verify::{verify, Suite, VerifyReport};
