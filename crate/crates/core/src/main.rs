use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use pro_klshampoo::error::Result;
use pro_klshampoo::harness::{dump_spectrum, run, verify, Checkpoint, Optimizer, RunConfig, Suite};
use pro_klshampoo::kl_analysis::{
    alpha_bracket, approximation_gap, solve_full_stationary, solve_restricted_stationary, subspace_optimality_check,
    SolverConfig, SpikedModel,
};
use pro_klshampoo::linalg::{sym_eig, Mat, Vector};
use pro_klshampoo::polar::PolarMode;

/// Thread count for the rayon pool; everything else comes from flags and config files.
const THREADS_ENV: &str = "PRO_KLSHAMPOO_THREADS";

#[derive(Parser)]
#[command(version, about = "Restricted KL-Shampoo optimizer toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training config (TOML) and write CSV metrics and a checkpoint.
    Train(TrainArgs),
    /// Run verification suites; exits nonzero if any check fails.
    Verify {
        #[arg(value_enum, default_value = "all")]
        suite: Suite,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Stationary pair of a random spiked model, as JSON.
    Stationarity {
        #[command(flatten)]
        model: ModelArgs,
        /// Solve the restricted problem on the top-`rank` eigenspace of R* instead.
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Brute-force optimal eigen-subset of Diag(phi) against random Stiefel samples.
    Subspace {
        /// Comma-separated positive diagonal of phi.
        #[arg(long, value_delimiter = ',', required = true)]
        diag: Vec<f64>,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Restricted-vs-full objective gap and its AM/GM bound.
    Gap {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        rank: usize,
        /// Log10 half-width of a random diagonal right noise factor (0 = isotropic).
        #[arg(long, default_value_t = 0.0)]
        tail_spread: f64,
    },
    /// Bracket on the subspace mixing weight for an m x n layer at rank r.
    Calibrate { m: usize, n: usize, r: usize },
    /// Tail-normalized preconditioner spectra from a checkpoint.
    Spectrum {
        checkpoint: PathBuf,
        #[arg(long)]
        rank: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    config: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<Optimizer>,
    #[arg(long, value_parser = parse_polar)]
    polar: Option<PolarMode>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    rho: usize,
    #[arg(long, default_value_t = 1.0)]
    signal_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn build(&self, rng: &mut ChaCha8Rng) -> Result<SpikedModel> {
        SpikedModel::random(self.m, self.n, self.rho, self.signal_scale, self.sigma, rng)
    }
}

fn parse_optimizer(s: &str) -> std::result::Result<Optimizer, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_polar(s: &str) -> std::result::Result<PolarMode, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.lr {
        cfg.hyper.lr = v;
    }
    if let Some(v) = args.rank {
        cfg.hyper.rank = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.optimizer {
        cfg.optimizer = v;
    }
    if args.polar.is_some() {
        cfg.polar = args.polar;
    }
    if args.csv.is_some() {
        cfg.csv = args.csv;
    }
    if args.checkpoint.is_some() {
        cfg.checkpoint = args.checkpoint;
    }
    let out = run(&cfg)?;
    if cfg.csv.is_none() {
        print!("{}", out.csv);
    }
    eprintln!(
        "{} steps: loss {:.6e} -> {:.6e}",
        cfg.steps,
        out.initial_loss(),
        out.final_loss()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    let cfg = SolverConfig::default();
    match cli.command {
        Command::Train(args) => train(args)?,
        Command::Verify { suite, report } => {
            let rep = verify(suite)?;
            for c in &rep.checks {
                eprintln!(
                    "{} {:?}/{}: {:.3e} (tol {:.1e})",
                    if c.pass { "ok  " } else { "FAIL" },
                    c.suite,
                    c.name,
                    c.measured,
                    c.tolerance
                );
            }
            if let Some(path) = report {
                std::fs::write(path, serde_json::to_string_pretty(&rep)?)?;
            }
            return Ok(rep.passed);
        }
        Command::Stationarity { model, rank } => {
            let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
            let model = model.build(&mut rng)?;
            let full = solve_full_stationary(&model, &cfg)?;
            match rank {
                None => print(&full)?,
                Some(r) => {
                    let basis = sym_eig(&full.rhat.dense())?.basis.columns(0, r).into_owned();
                    print(&solve_restricted_stationary(&model, &basis, &cfg)?)?;
                }
            }
        }
        Command::Subspace {
            diag,
            rank,
            trials,
            seed,
        } => {
            let phi = Mat::from_diagonal(&Vector::from_vec(diag));
            print(&subspace_optimality_check(&phi, rank, trials, seed)?)?;
        }
        Command::Gap {
            model,
            rank,
            tail_spread,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
            let mut spiked = model.build(&mut rng)?;
            if tail_spread > 0.0 {
                let d = Vector::from_fn(model.n, |_, _| {
                    10f64.powf(tail_spread * (2.0 * rand::Rng::random::<f64>(&mut rng) - 1.0))
                });
                spiked = spiked.with_separable_noise(Mat::identity(model.m, model.m), Mat::from_diagonal(&d))?;
            }
            print(&approximation_gap(&spiked, rank, &cfg)?)?;
        }
        Command::Calibrate { m, n, r } => print(&alpha_bracket(m, n, r)?)?,
        Command::Spectrum { checkpoint, rank } => print(&dump_spectrum(&Checkpoint::load(&checkpoint)?, rank))?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    if let Some(threads) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
