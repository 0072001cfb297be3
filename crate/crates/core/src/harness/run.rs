//! Training loop driver: config, CSV metrics and checkpoint.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, ParamState};
use super::task::Task;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::polar::PolarMode;
use crate::state::Hyper;

fn default_eval_every() -> usize {
    1
}

/// A training run, read from TOML. See `configs/` for annotated examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub optimizer: Optimizer,
    #[serde(default)]
    pub hyper: Hyper,
    pub steps: usize,
    /// Minibatch rows per step; `0` means full batch.
    #[serde(default)]
    pub batch: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Seed of the minibatch / gradient-sampling stream.
    #[serde(default)]
    pub seed: u64,
    /// Overrides `hyper.polar` when set.
    #[serde(default)]
    pub polar: Option<PolarMode>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Step parameters on the rayon pool instead of in sequence.
    #[serde(default)]
    pub parallel: bool,
    /// Record wallclock time. Off by default so that output is byte-for-byte
    /// reproducible; the column is then written as 0.
    #[serde(default)]
    pub wallclock: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        self.task.validate()?;
        self.effective_hyper().validate()
    }

    pub fn effective_hyper(&self) -> Hyper {
        let mut h = self.hyper.clone();
        if let Some(p) = self.polar {
            h.polar = p;
        }
        h
    }
}

/// One logged row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub step: usize,
    pub train_loss: f64,
    pub grad_fro_norm: f64,
    /// Summed over parameters; `None` for optimizers without a tracked subspace.
    pub mixed_norm_measure: Option<f64>,
    pub wallclock_ms: f64,
    pub eigen_ranges: Vec<Option<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub step: usize,
    #[serde(with = "crate::serde_mat::list")]
    pub params: Vec<Mat>,
    pub states: Vec<ParamState>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<Row>,
    pub csv: String,
    pub checkpoint: Checkpoint,
}

impl RunOutcome {
    pub fn initial_loss(&self) -> f64 {
        self.rows[0].train_loss
    }

    pub fn final_loss(&self) -> f64 {
        self.rows.last().expect("initial row is always logged").train_loss
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(n_params: usize) -> String {
    let mut h = String::from("step,train_loss,grad_fro_norm,mixed_norm_measure,wallclock_ms");
    for p in 0..n_params {
        let _ = write!(h, ",p{p}_eig_min,p{p}_eig_max");
    }
    h.push('\n');
    h
}

fn render(row: &Row) -> String {
    let mut s = format!(
        "{},{},{},{},{}",
        row.step,
        num(row.train_loss),
        num(row.grad_fro_norm),
        row.mixed_norm_measure.map(num).unwrap_or_default(),
        num(row.wallclock_ms)
    );
    for r in &row.eigen_ranges {
        match r {
            Some((lo, hi)) => {
                let _ = write!(s, ",{},{}", num(*lo), num(*hi));
            }
            None => s.push_str(",,"),
        }
    }
    s.push('\n');
    s
}

/// Execute a run. Writes the CSV and checkpoint when paths are configured.
///
/// Row `k` reports the full-data loss and gradient at the weights after
/// `k` steps. A non-finite loss writes that row and aborts; a violated
/// preconditioner bound or basis orthonormality aborts with
/// [`Error::Invariant`].
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let h = cfg.effective_hyper();
    let (problem, mut params) = cfg.task.instantiate()?;
    let mut states = params
        .iter()
        .map(|p| ParamState::new(cfg.optimizer, p.shape(), &h))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = Instant::now();
    let all_rows: Vec<usize> = (0..problem.num_rows()).collect();
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut csv = header(params.len());
    let mut rows = Vec::new();
    let mut log = |step: usize, params: &[Mat], states: &[ParamState], csv: &mut String| -> Result<bool> {
        let (loss, grads) = problem.loss_and_grads(params, &all_rows, Some(&mut eval_rng));
        let measure = states
            .iter()
            .zip(&grads)
            .map(|(s, g)| s.measure(g, &h))
            .try_fold(0.0, |acc, v| v.map(|v| acc + v));
        let row = Row {
            step,
            train_loss: loss,
            grad_fro_norm: grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt(),
            mixed_norm_measure: measure,
            wallclock_ms: if cfg.wallclock {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
            eigen_ranges: states.iter().map(ParamState::eigen_range).collect(),
        };
        csv.push_str(&render(&row));
        rows.push(row);
        Ok(loss.is_finite())
    };

    let write_csv = |csv: &str| -> Result<()> {
        if let Some(path) = &cfg.csv {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, csv)?;
        }
        Ok(())
    };

    if !log(0, &params, &states, &mut csv)? {
        write_csv(&csv)?;
        return Err(Error::NonFinite("initial training loss"));
    }
    for step in 1..=cfg.steps {
        let batch = problem.minibatch(cfg.batch, &mut rng);
        let (_, grads) = problem.loss_and_grads(&params, &batch, Some(&mut rng));
        if cfg.parallel {
            params
                .par_iter_mut()
                .zip(states.par_iter_mut())
                .zip(grads.par_iter())
                .try_for_each(|((w, s), g)| s.step(cfg.optimizer, w, g, &h))?;
        } else {
            for ((w, s), g) in params.iter_mut().zip(states.iter_mut()).zip(&grads) {
                s.step(cfg.optimizer, w, g, &h)?;
            }
        }
        if step % cfg.eval_every == 0 || step == cfg.steps {
            for s in &states {
                if let Err(e) = s.check_invariants(step) {
                    write_csv(&csv)?;
                    return Err(e);
                }
            }
            if !log(step, &params, &states, &mut csv)? {
                write_csv(&csv)?;
                return Err(Error::NonFinite("training loss"));
            }
        }
    }
    write_csv(&csv)?;

    let checkpoint = Checkpoint {
        config: cfg.clone(),
        step: cfg.steps,
        params,
        states,
    };
    if let Some(path) = &cfg.checkpoint {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string(&checkpoint)?)?;
    }
    Ok(RunOutcome { rows, csv, checkpoint })
}
