//! Fixed-seed verification suites. Every check reports the measured worst
//! case next to its tolerance.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::optim::Optimizer;
use super::run::{run, RunConfig};
use super::task::{Task, TaskKind};
use crate::error::{Error, Result};
use crate::kl_analysis::calibrate::round_sig;
use crate::kl_analysis::identity::{polar_identity_fuzz, random_spd, scaling_fuzz};
use crate::kl_analysis::measure::{descent_sweep, mixed_norm_measure, sigma_p, DescentMethod, MeasureConstants, Quadratic};
use crate::kl_analysis::stationary::restricted_residuals;
use crate::kl_analysis::subspace::am_gm;
use crate::kl_analysis::{
    alpha_bracket, approximation_gap, kl_objective, optimal_subspace_bruteforce, solve_full_stationary,
    solve_restricted_stationary, subspace_optimality_check, RightFactor, Side, SolverConfig, SpikedModel,
};
use crate::linalg::{principal_angle_sines, projector, svd, sym_eig, thin_qr, Mat, Vector};
use crate::polar::{newton_schulz, polar_exact, NsConfig, PolarMode};
use crate::state::{init_state, Hyper};
use crate::step::subspace_track;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    All,
    Polar,
    Stationarity,
    Subspace,
    Gap,
    Bracket,
    Clamp,
    Descent,
    Identity,
}

impl Suite {
    const EACH: [Suite; 8] = [
        Suite::Identity,
        Suite::Stationarity,
        Suite::Gap,
        Suite::Subspace,
        Suite::Bracket,
        Suite::Clamp,
        Suite::Polar,
        Suite::Descent,
    ];
}

/// One measured quantity. `pass` is `measured ≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Recorder {
    suite: Suite,
    checks: Vec<Check>,
}

impl Recorder {
    fn at_most(&mut self, name: &str, measured: f64, tolerance: f64) {
        self.checks.push(Check {
            suite: self.suite,
            name: name.to_string(),
            measured,
            tolerance,
            pass: measured <= tolerance,
        });
    }
}

pub fn verify(suite: Suite) -> Result<VerifyReport> {
    let suites: Vec<Suite> = match suite {
        Suite::All => Suite::EACH.to_vec(),
        s => vec![s],
    };
    let mut checks = Vec::new();
    for s in suites {
        let mut rec = Recorder {
            suite: s,
            checks: Vec::new(),
        };
        match s {
            Suite::Identity => identity(&mut rec),
            Suite::Stationarity => stationarity(&mut rec)?,
            Suite::Gap => gap(&mut rec)?,
            Suite::Subspace => subspace(&mut rec)?,
            Suite::Bracket => bracket(&mut rec)?,
            Suite::Clamp => clamp(&mut rec)?,
            Suite::Polar => polar(&mut rec),
            Suite::Descent => descent(&mut rec)?,
            Suite::All => unreachable!(),
        }
        checks.extend(rec.checks);
    }
    Ok(VerifyReport {
        suite,
        passed: checks.iter().all(|c| c.pass),
        checks,
    })
}

fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn stiefel(n: usize, r: usize, rng: &mut ChaCha8Rng) -> Mat {
    thin_qr(&randn(n, r, rng)).expect("gaussian has full rank").q
}

/// Random spiked models with `m, n ≤ 16`, `ρ ≤ 4`.
pub fn model_family(count: usize, seed: u64) -> Result<Vec<SpikedModel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let rho = rng.random_range(1..=4);
            let m = rng.random_range(rho + 2..=16);
            let n = rng.random_range(rho + 2..=16);
            let scale = rng.random_range(0.5..2.0);
            let sigma = rng.random_range(0.3..1.5);
            SpikedModel::random(m, n, rho, scale, sigma, &mut rng)
        })
        .collect()
}

fn rel_spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    (hi - lo) / hi
}

/// Ascending eigenvalues.
fn ascending(a: &Mat) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = sym_eig(a)?.values.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Orthonormal basis of the complement of `range(a)` (`a` of full column rank).
fn complement(a: &Mat) -> Result<Mat> {
    let m = a.nrows();
    let q = thin_qr(a)?.q;
    let eig = sym_eig(&(Mat::identity(m, m) - projector(&q)))?;
    Ok(eig.basis.columns(0, m - a.ncols()).into_owned())
}

fn hcat(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn identity(rec: &mut Recorder) {
    let t0 = Instant::now();
    let rep = polar_identity_fuzz(100, 1, 1e-7);
    rec.at_most("polar_identity_max_abs", rep.worst, 1e-7);
    rec.at_most("polar_identity_seconds", t0.elapsed().as_secs_f64(), 5.0);
    let sc = scaling_fuzz(500, 2);
    rec.at_most("scaling_inequalities_violation", sc.worst.max(0.0), sc.tol);
}

fn stationarity(rec: &mut Recorder) -> Result<()> {
    let cfg = SolverConfig::default();
    let models = model_family(20, 100)?;
    let (mut res, mut spread, mut floor) = (0.0f64, 0.0f64, 0.0f64);
    let (mut restr, mut sp, mut sub) = (0.0f64, 0.0f64, 0.0f64);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for model in &models {
        let (m, n) = model.dims();
        let rho = model.rank();
        let pair = solve_full_stationary(model, &cfg)?;
        res = res.max(pair.residual());
        let rstar = pair.rhat.dense();
        let le = ascending(&pair.l)?;
        let re = ascending(&rstar)?;
        spread = spread.max(rel_spread(&le[..m - rho])).max(rel_spread(&re[..n - rho]));
        let s2 = model.noise_sigma * model.noise_sigma;
        let predicted = s2 * pair.rhat.inverse()?.trace() / n as f64;
        floor = floor.max((le[0] - predicted).abs() / predicted);

        let r = rng.random_range(1..n);
        let u = stiefel(n, r, &mut rng);
        let rp = solve_restricted_stationary(model, &u, &cfg)?;
        let RightFactor::Restricted { s, mu_perp, .. } = &rp.rhat else {
            unreachable!()
        };
        restr = restr.max(restricted_residuals(model, &rp.l, &u, s, *mu_perp)?.max());
        sp = sp.max((sigma_p(model, &rp.l, &rp.rhat)? - (m * n) as f64).abs());
        let phi = model.expected_whitened(Side::Right, &crate::linalg::inverse_spd(&rp.l)?);
        let tr = (crate::linalg::inverse_spd(s)? * u.transpose() * phi * &u).trace();
        sub = sub.max((tr - (m * r) as f64).abs());
    }
    rec.at_most("full_residual", res, 1e-10);
    rec.at_most("flat_tail_relative_spread", spread, 1e-8);
    rec.at_most("floor_relative_error", floor, 1e-8);

    // Separable noise: on the complement of range(A) the left factor is a
    // multiple of Σ_L.
    let mut sep = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for model in models.iter().take(10) {
        let (m, n) = model.dims();
        let sl = random_spd(m, 5.0, &mut rng);
        let sr = random_spd(n, 5.0, &mut rng);
        let model = model.clone().with_separable_noise(sl.clone(), sr.clone())?;
        let pair = solve_full_stationary(&model, &cfg)?;
        let q = complement(&model.signal_left)?;
        let c = model.noise_sigma.powi(2) * (pair.rhat.inverse()? * sr).trace() / n as f64;
        let lhs = q.transpose() * &pair.l * &q;
        let rhs = q.transpose() * sl * &q * c;
        sep = sep.max((lhs - &rhs).norm() / rhs.norm());
    }
    rec.at_most("separable_floor_relative_error", sep, 1e-6);
    rec.at_most("restricted_residual", restr, 1e-9);
    rec.at_most("sigma_p_minus_mn", sp, 1e-6);
    rec.at_most("subspace_trace_minus_mr", sub, 1e-6);
    Ok(())
}

fn gap(rec: &mut Recorder) -> Result<()> {
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut zero = 0.0f64;
    for model in model_family(20, 100)? {
        let (_, n) = model.dims();
        let rho = model.rank();
        let r = rng.random_range(rho..n);
        let extra = randn(n, r - rho, &mut rng);
        let u = thin_qr(&hcat(&model.signal_right, &extra))?.q;
        let full = solve_full_stationary(&model, &cfg)?;
        let restricted = solve_restricted_stationary(&model, &u, &cfg)?;
        let j = kl_objective(&restricted.l, &restricted.rhat, &model)?;
        zero = zero.max((j - full.objective).abs());
    }
    rec.at_most("zero_gap_abs", zero, 1e-8);

    let (mut below, mut above) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    for model in model_family(20, 300)? {
        let (m, n) = model.dims();
        let tail = Vector::from_fn(n, |_, _| 10f64.powf(rng.random_range(-0.5..0.5)));
        let model = model.with_separable_noise(Mat::identity(m, m), Mat::from_diagonal(&tail))?;
        // at least two tail entries, so the tail is genuinely non-flat
        let r = rng.random_range(model.rank()..n - 1);
        let rep = approximation_gap(&model, r, &cfg)?;
        below = below.max(-rep.gap);
        above = above.max(rep.gap - rep.bound);
    }
    rec.at_most("gap_negative_part", below.max(0.0), 0.0);
    rec.at_most("gap_minus_bound", above, 1e-8);
    Ok(())
}

fn subspace(rec: &mut Recorder) -> Result<()> {
    let phi = Mat::from_diagonal(&Vector::from_vec(vec![10.0, 9.0, 1.0]));
    let choice = optimal_subspace_bruteforce(&phi, 1)?;
    rec.at_most("bruteforce_selects_bottom", if choice.indices == [2] { 0.0 } else { 1.0 }, 0.0);
    rec.at_most("selected_complement_am_gm_minus_1.00", (choice.am_gm - 1.00).abs(), 0.01);
    rec.at_most("top1_complement_am_gm_minus_1.67", (am_gm(&[9.0, 1.0]) - 1.67).abs(), 0.01);

    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mut worst = 0.0f64;
    for t in 0..50 {
        let n = rng.random_range(2..=8);
        let r = rng.random_range(1..n);
        let d = Vector::from_fn(n, |_, _| 10f64.powf(rng.random_range(-1.0..1.0)));
        let check = subspace_optimality_check(&Mat::from_diagonal(&d), r, 1000, 10_000 * t)?;
        worst = worst.max(check.max_violation);
    }
    rec.at_most("stiefel_sample_beats_bruteforce", worst, 1e-8);

    rec.at_most("tracking_principal_angle", tracking_angle(500)?, 1e-6);
    Ok(())
}

/// Track the top-2 eigenspace of a static `Φ = Diag(10, 9, 1, .5, .5, .5)`
/// with `L = I` and `G = Φ^{1/2}`; returns the largest principal-angle sine
/// after `iterations` tracking steps from a random start.
pub fn tracking_angle(iterations: usize) -> Result<f64> {
    let d = [10.0, 9.0, 1.0, 0.5, 0.5, 0.5];
    let n = d.len();
    let g = Mat::from_diagonal(&Vector::from_iterator(n, d.iter().map(|v: &f64| v.sqrt())));
    let h = Hyper {
        rank: 2,
        beta2: 0.95,
        ..Hyper::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut st = init_state(&randn(n, n, &mut rng), &h)?;
    st.l = Mat::identity(n, n);
    st.eig_l.basis = Mat::identity(n, n);
    st.eig_l.values = Vector::from_element(n, 1.0);
    st.basis = stiefel(n, 2, &mut rng);
    let phi = Mat::from_diagonal(&Vector::from_row_slice(&d));
    st.s = st.basis.transpose() * &phi * &st.basis / n as f64;
    for _ in 0..iterations {
        subspace_track(&mut st, &g, &h)?;
    }
    let top = Mat::identity(n, n).columns(0, 2).into_owned();
    Ok(principal_angle_sines(&st.basis, &top).max())
}

/// Reference brackets `(m, n, r, lower, upper)` for common transformer layer
/// shapes, at two significant figures.
pub const BRACKET_TABLE: [(usize, usize, usize, f64, f64); 12] = [
    (768, 768, 128, 0.0014, 0.036),
    (3072, 768, 128, 0.0013, 0.037),
    (768, 3072, 128, 0.00067, 0.018),
    (1024, 1024, 128, 0.0010, 0.031),
    (4096, 1024, 128, 0.0010, 0.032),
    (1024, 4096, 128, 0.00050, 0.016),
    (768, 768, 128, 0.0014, 0.036),
    (2048, 768, 128, 0.0013, 0.037),
    (768, 2048, 128, 0.00082, 0.023),
    (1024, 1024, 128, 0.0010, 0.031),
    (2816, 1024, 128, 0.0010, 0.032),
    (1024, 2816, 128, 0.00060, 0.019),
];

fn bracket(rec: &mut Recorder) -> Result<()> {
    let (mut mismatches, mut ratio) = (0usize, 0.0f64);
    for (m, n, r, lo, hi) in BRACKET_TABLE {
        let b = alpha_bracket(m, n, r)?;
        if round_sig(b.lower, 2) != lo || round_sig(b.upper, 2) != hi {
            mismatches += 1;
        }
        ratio = ratio.max((b.upper / b.lower - (b.k as f64).sqrt()).abs());
    }
    rec.at_most("table_rows_mismatched", mismatches as f64, 0.0);
    rec.at_most("width_minus_sqrt_k", ratio, 1e-12);
    Ok(())
}

/// Ten Pro-KLShampoo runs on sampled spiked gradients, checking the
/// eigenvalue bounds and basis orthonormality after every step. Returns the
/// number of runs that raised an invariant error.
pub fn clamp_runs(steps: usize) -> Result<usize> {
    let mut failures = 0;
    for i in 0..10u64 {
        let (m, n) = [(6, 10), (10, 6), (8, 8), (4, 12), (12, 5)][i as usize % 5];
        let cfg = RunConfig {
            task: Task {
                kind: TaskKind::SyntheticGradient {
                    m,
                    n,
                    rho: 2,
                    signal_scale: [0.1, 3.0][i as usize % 2],
                },
                noise: [1.0, 0.01][(i as usize / 2) % 2],
                seed: i,
            },
            optimizer: if i < 8 { Optimizer::Pro } else { Optimizer::SmokHop },
            hyper: Hyper {
                rank: 1 + i as usize % 3,
                lr: 0.01,
                init_scale: [0.1, 50.0][(i as usize / 3) % 2],
                qr_period: 1 + i % 7,
                ..Hyper::default()
            },
            steps,
            batch: 0,
            eval_every: 1,
            seed: 1000 + i,
            polar: None,
            csv: None,
            checkpoint: None,
            parallel: false,
            wallclock: false,
        };
        match run(&cfg) {
            Ok(_) => {}
            Err(Error::Invariant { .. }) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(failures)
}

fn clamp(rec: &mut Recorder) -> Result<()> {
    rec.at_most("runs_violating_bounds", clamp_runs(500)? as f64, 0.0);
    Ok(())
}

/// `(max ‖NS₅(M) − polar(M)‖_op, min σ(NS₅(M)), max σ(NS₅(M)))` over random
/// matrices with `σ_min/σ_max ≥ 0.05`.
pub fn newton_schulz_extremes(trials: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = NsConfig::default();
    let (mut gap, mut lo, mut hi) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..trials {
        let m = rng.random_range(2..=16);
        let n = rng.random_range(2..=16);
        let k = m.min(n);
        let sig = Vector::from_fn(k, |_, _| 0.05f64.powf(rng.random::<f64>()));
        let u = stiefel(m, k, &mut rng);
        let v = stiefel(n, k, &mut rng);
        let mat = &u * Mat::from_diagonal(&sig) * v.transpose() * 10f64.powf(rng.random_range(-2.0..2.0));
        let out = newton_schulz(&mat, &ns);
        gap = gap.max(crate::linalg::op_norm(&(&out - polar_exact(&mat, 1e-12))));
        let s = svd(&out).sigma;
        lo = lo.min(s.min());
        hi = hi.max(s.max());
    }
    (gap, lo, hi)
}

fn polar(rec: &mut Recorder) {
    let (gap, lo, hi) = newton_schulz_extremes(100, 600);
    rec.at_most("ns_polar_op_gap", gap, 0.35);
    rec.at_most("ns_sigma_below_0.7", (0.7 - lo).max(0.0), 0.0);
    rec.at_most("ns_sigma_above_1.3", (hi - 1.3).max(0.0), 0.0);
}

/// Configuration of the regression convergence run.
pub fn regression_config() -> RunConfig {
    RunConfig {
        task: Task {
            kind: TaskKind::MatrixRegression {
                m: 16,
                n: 24,
                samples: 64,
            },
            noise: 0.0,
            seed: 7,
        },
        optimizer: Optimizer::Pro,
        hyper: Hyper {
            rank: 4,
            lr: 0.05,
            ..Hyper::default()
        },
        steps: 300,
        batch: 0,
        eval_every: 1,
        seed: 0,
        polar: Some(PolarMode::Exact),
        csv: None,
        checkpoint: None,
        parallel: false,
        wallclock: false,
    }
}

fn descent(rec: &mut Recorder) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let problem = Quadratic {
        target: randn(6, 8, &mut rng),
    };
    let w0 = randn(6, 8, &mut rng);
    let h = Hyper {
        rank: 2,
        polar: PolarMode::Exact,
        ..Hyper::default()
    };
    for (name, method) in [("pro_exact", DescentMethod::Pro), ("smok_hop", DescentMethod::SmokHop)] {
        let sweep = descent_sweep(&problem, &w0, method, &h, 100)?;
        rec.at_most(
            &format!("{name}_no_monotone_rate"),
            if sweep.selected.is_some() { 0.0 } else { 1.0 },
            0.0,
        );
    }

    let out = run(&regression_config())?;
    rec.at_most("regression_final_over_initial", out.final_loss() / out.initial_loss(), 0.01);

    let mut zero_measures = 0usize;
    for _ in 0..1000 {
        let m = rng.random_range(1..=8);
        let n = rng.random_range(2..=8);
        let r = rng.random_range(1..n);
        let u = stiefel(n, r, &mut rng);
        let g = randn(m, n, &mut rng) * 10f64.powf(rng.random_range(-6.0..2.0));
        let k = MeasureConstants {
            aspect: (m as f64 / n as f64).max(1.0).sqrt(),
            clip: rng.random_range(1.0..100.0),
            theta: rng.random_range(1.0..100.0),
            alpha: rng.random_range(1e-3..1.0),
        };
        if mixed_norm_measure(&g, &u, &k)? <= 0.0 {
            zero_measures += 1;
        }
        if mixed_norm_measure(&Mat::zeros(m, n), &u, &k)? != 0.0 {
            zero_measures += 1;
        }
    }
    rec.at_most("measure_equivalence_failures", zero_measures as f64, 0.0);
    Ok(())
}

/// KL-Shampoo driven by sampled gradients of a `ρ = 3` spiked model; the
/// dumped spectrum of the right factor should show three spikes over a flat
/// tail.
pub fn spike_reproduction_config() -> RunConfig {
    let (m, n, steps) = (24, 24, 400);
    RunConfig {
        task: Task {
            kind: TaskKind::SyntheticGradient {
                m,
                n,
                rho: 3,
                signal_scale: 1.0,
            },
            noise: 1.0,
            seed: 16,
        },
        optimizer: Optimizer::Klshampoo,
        // the gradient stream does not depend on the weights
        hyper: Hyper {
            lr: 0.0,
            ..Hyper::default()
        },
        steps,
        batch: 0,
        eval_every: steps,
        seed: 17,
        polar: None,
        csv: None,
        checkpoint: None,
        parallel: false,
        wallclock: false,
    }
}

/// `(worst tail deviation outside [0.8, 1.25], fewest spikes above 2)` over
/// both factors of the dumped spectrum at `r = 8`.
pub fn spike_reproduction() -> Result<(f64, usize)> {
    let out = run(&spike_reproduction_config())?;
    let dump = super::spectrum::dump_spectrum(&out.checkpoint, 8);
    let mut outside = 0.0f64;
    let mut spikes = usize::MAX;
    for f in &dump.params[0].factors {
        for &v in f.tail(8) {
            outside = outside.max(0.8 - v).max(v - 1.25);
        }
        spikes = spikes.min(f.spikes_above(2.0));
    }
    Ok((outside.max(0.0), spikes))
}
