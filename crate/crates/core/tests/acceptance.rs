//! One PASS/FAIL line per acceptance criterion, with tolerances pinned here.
//!
//! Two criteria cannot be met by a faithful implementation and are expected
//! to print FAIL (see `KNOWN_UNATTAINABLE`); the process fails if any other
//! criterion fails or if one of those unexpectedly passes.

use std::time::Instant;

use pro_klshampoo::baselines::init_klshampoo;
use pro_klshampoo::harness::audit::{klshampoo_formula, memory_audit_klshampoo, memory_audit_pro, pro_formula};
use pro_klshampoo::harness::verify::{
    clamp_runs, newton_schulz_extremes, regression_config, spike_reproduction, tracking_angle, verify, Suite,
    VerifyReport, BRACKET_TABLE,
};
use pro_klshampoo::harness::{run, Optimizer, RunConfig, Task, TaskKind};
use pro_klshampoo::kl_analysis::alpha_bracket;
use pro_klshampoo::kl_analysis::calibrate::round_sig;
use pro_klshampoo::kl_analysis::identity::polar_identity_fuzz;
use pro_klshampoo::linalg::Mat;
use pro_klshampoo::polar::PolarMode;
use pro_klshampoo::state::{init_state, Hyper};

/// 4096x1024 lower bracket end computes to 0.000992 (0.00099 at two
/// significant figures) where the tabulated value is 0.0010; the Muon
/// Newton-Schulz polynomial maps part of (0, 1] to about 0.68 after five
/// iterations.
const KNOWN_UNATTAINABLE: [u8; 2] = [8, 11];

const POLAR_IDENTITY_TOL: f64 = 1e-7;
const POLAR_IDENTITY_SECONDS: f64 = 5.0;
const FULL_RESIDUAL_TOL: f64 = 1e-10;
const FLAT_TAIL_TOL: f64 = 1e-8;
const FLOOR_TOL: f64 = 1e-8;
const SEPARABLE_FLOOR_TOL: f64 = 1e-6;
const ZERO_GAP_TOL: f64 = 1e-8;
const GAP_BOUND_SLACK: f64 = 1e-8;
const AM_GM_TOL: f64 = 0.01;
const STIEFEL_TOL: f64 = 1e-8;
const RESTRICTED_RESIDUAL_TOL: f64 = 1e-9;
const SIGMA_P_TOL: f64 = 1e-6;
const BRACKET_WIDTH_TOL: f64 = 1e-12;
const TRACKING_ANGLE_TOL: f64 = 1e-6;
const NS_OP_GAP: f64 = 0.35;
const NS_SIGMA_RANGE: (f64, f64) = (0.7, 1.3);
const REGRESSION_FRACTION: f64 = 0.01;
const REGRESSION_STEPS: usize = 300;
const SPIKE_TAIL_RANGE: (f64, f64) = (0.8, 1.25);
const SPIKE_THRESHOLD_COUNT: usize = 3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn measured(rep: &VerifyReport, name: &str) -> f64 {
    rep.get(name).unwrap_or_else(|| panic!("missing check {name}")).measured
}

fn c01() -> Outcome {
    let t0 = Instant::now();
    let rep = polar_identity_fuzz(100, 11, POLAR_IDENTITY_TOL);
    let secs = t0.elapsed().as_secs_f64();
    Outcome {
        pass: rep.passed == 100 && rep.worst <= POLAR_IDENTITY_TOL && secs < POLAR_IDENTITY_SECONDS,
        detail: format!("{}/100 triples, max |diff| {:.2e} <= {POLAR_IDENTITY_TOL:e}, {secs:.3}s", rep.passed, rep.worst),
    }
}

fn c02(st: &VerifyReport) -> Outcome {
    let (res, spread, floor, sep) = (
        measured(st, "full_residual"),
        measured(st, "flat_tail_relative_spread"),
        measured(st, "floor_relative_error"),
        measured(st, "separable_floor_relative_error"),
    );
    Outcome {
        pass: res <= FULL_RESIDUAL_TOL && spread <= FLAT_TAIL_TOL && floor <= FLOOR_TOL && sep <= SEPARABLE_FLOOR_TOL,
        detail: format!(
            "20 models: residual {res:.1e}, tail spread {spread:.1e}, floor err {floor:.1e}; separable floor err {sep:.1e}"
        ),
    }
}

fn c03(gap: &VerifyReport) -> Outcome {
    let z = measured(gap, "zero_gap_abs");
    Outcome {
        pass: z <= ZERO_GAP_TOL,
        detail: format!("20 models with U containing range(B): max |J_restr - J_full| {z:.2e} <= {ZERO_GAP_TOL:e}"),
    }
}

fn c04(gap: &VerifyReport) -> Outcome {
    let below = measured(gap, "gap_negative_part");
    let above = measured(gap, "gap_minus_bound");
    Outcome {
        pass: below <= 0.0 && above <= GAP_BOUND_SLACK,
        detail: format!("20 non-flat models: max(-gap) {below:.2e} <= 0, max(gap - bound) {above:.2e} <= {GAP_BOUND_SLACK:e}"),
    }
}

fn c05(sub: &VerifyReport) -> Outcome {
    let bottom = measured(sub, "bruteforce_selects_bottom") == 0.0;
    let sel = measured(sub, "selected_complement_am_gm_minus_1.00");
    let top = measured(sub, "top1_complement_am_gm_minus_1.67");
    let stiefel = measured(sub, "stiefel_sample_beats_bruteforce");
    Outcome {
        pass: bottom && sel <= AM_GM_TOL && top <= AM_GM_TOL && stiefel <= STIEFEL_TOL,
        detail: format!(
            "Diag(10,9,1) r=1 keeps bottom: {bottom}, |AM/GM - 1.00| {sel:.1e}, |top-1 AM/GM - 1.67| {top:.1e}; \
             50x1000 Stiefel samples, worst excess {stiefel:.1e}"
        ),
    }
}

fn c06(st: &VerifyReport) -> Outcome {
    let r = measured(st, "restricted_residual");
    Outcome {
        pass: r <= RESTRICTED_RESIDUAL_TOL,
        detail: format!("max restricted residual (S, mu, L) {r:.2e} <= {RESTRICTED_RESIDUAL_TOL:e}"),
    }
}

fn c07(st: &VerifyReport) -> Outcome {
    let a = measured(st, "sigma_p_minus_mn");
    let b = measured(st, "subspace_trace_minus_mr");
    Outcome {
        pass: a <= SIGMA_P_TOL && b <= SIGMA_P_TOL,
        detail: format!("max |sigma_P^2 - mn| {a:.2e}, max |Tr - mr| {b:.2e} <= {SIGMA_P_TOL:e}"),
    }
}

fn c08() -> Outcome {
    let mut bad = Vec::new();
    let mut width = 0.0f64;
    for (m, n, r, lo, hi) in BRACKET_TABLE {
        let b = alpha_bracket(m, n, r).expect("valid row");
        let (l2, u2) = (round_sig(b.lower, 2), round_sig(b.upper, 2));
        if l2 != lo || u2 != hi {
            bad.push(format!("({m},{n},{r}) -> [{l2}, {u2}] vs [{lo}, {hi}]"));
        }
        width = width.max((b.upper / b.lower - (b.k as f64).sqrt()).abs());
    }
    Outcome {
        pass: bad.is_empty() && width <= BRACKET_WIDTH_TOL,
        detail: format!(
            "{}/12 rows match at 2 s.f.{}; max |ratio - sqrt k| {width:.1e}",
            12 - bad.len(),
            if bad.is_empty() { String::new() } else { format!(" (mismatch: {})", bad.join("; ")) }
        ),
    }
}

fn c09() -> Outcome {
    let failures = clamp_runs(500).expect("clamp runs");
    Outcome {
        pass: failures == 0,
        detail: format!("10 runs x 500 steps, eigenvalues in [1/C^2, Theta] and U'U = I at every step; {failures} violating runs"),
    }
}

fn c10() -> Outcome {
    let angle = tracking_angle(500).expect("tracking");
    Outcome {
        pass: angle <= TRACKING_ANGLE_TOL,
        detail: format!("Diag(10,9,1,.5,.5,.5), r=2, 500 iterations: max principal-angle sine {angle:.2e} <= {TRACKING_ANGLE_TOL:e}"),
    }
}

fn c11() -> Outcome {
    let (gap, lo, hi) = newton_schulz_extremes(100, 1100);
    Outcome {
        pass: gap <= NS_OP_GAP && lo >= NS_SIGMA_RANGE.0 && hi <= NS_SIGMA_RANGE.1,
        detail: format!(
            "100 matrices: max op gap {gap:.3} <= {NS_OP_GAP}, output sigma in [{lo:.3}, {hi:.3}] vs [{}, {}]",
            NS_SIGMA_RANGE.0, NS_SIGMA_RANGE.1
        ),
    }
}

fn c12(desc: &VerifyReport) -> Outcome {
    let pro = measured(desc, "pro_exact_no_monotone_rate") == 0.0;
    let smok = measured(desc, "smok_hop_no_monotone_rate") == 0.0;
    let out = run(&regression_config()).expect("regression run");
    let f0 = out.initial_loss();
    let reached = out
        .rows
        .iter()
        .find(|r| r.train_loss <= REGRESSION_FRACTION * f0)
        .map(|r| r.step);
    Outcome {
        pass: pro && smok && reached.is_some_and(|s| s <= REGRESSION_STEPS),
        detail: format!(
            "monotone 100-step descent with per-step bound met: pro-exact {pro}, smok-hop {smok}; \
             regression 16x24 reaches 1% at step {reached:?}, final ratio {:.1e}",
            out.final_loss() / f0
        ),
    }
}

fn c13(desc: &VerifyReport) -> Outcome {
    let f = measured(desc, "measure_equivalence_failures");
    Outcome {
        pass: f == 0.0,
        detail: format!("1000 fuzz trials (nonzero grad > 0, zero grad = 0): {f} failures"),
    }
}

fn c14() -> Outcome {
    let combos = [
        (4, 10, 2),
        (10, 4, 2),
        (8, 8, 1),
        (8, 8, 8),
        (3, 17, 3),
        (17, 3, 1),
        (16, 24, 4),
        (24, 16, 4),
        (1, 5, 1),
        (12, 12, 6),
    ];
    let mut bad = Vec::new();
    for (m, n, r) in combos {
        let h = Hyper {
            rank: r,
            ..Hyper::default()
        };
        let g = Mat::from_fn(m, n, |i, j| ((3 * i + 5 * j + 1) as f64).sin());
        let pro = memory_audit_pro(&init_state(&g, &h).expect("state"));
        let kl = memory_audit_klshampoo(&init_klshampoo(m, n, &h).expect("state"));
        if pro.check().is_err()
            || kl.check().is_err()
            || pro.counted() != pro_formula(m, n, r)
            || kl.counted() != klshampoo_formula(m, n)
        {
            bad.push((m, n, r));
        }
    }
    let worked = pro_formula(4, 10, 2) == 107 && klshampoo_formula(4, 10) == 286;
    Outcome {
        pass: bad.is_empty() && worked,
        detail: format!("10 (m,n,r) states counted per category; mismatches {bad:?}; 4x10 r=2 gives 107 / 286: {worked}"),
    }
}

fn c15() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = |tag: &str| RunConfig {
        task: Task {
            kind: TaskKind::TwoLayerMlp {
                input: 8,
                hidden: 12,
                classes: 3,
                samples: 96,
            },
            noise: 0.2,
            seed: 5,
        },
        optimizer: Optimizer::Pro,
        hyper: Hyper {
            lr: 0.02,
            rank: 3,
            ..Hyper::default()
        },
        steps: 60,
        batch: 32,
        eval_every: 1,
        seed: 9,
        polar: Some(PolarMode::NewtonSchulz),
        csv: Some(dir.path().join(format!("{tag}.csv"))),
        checkpoint: Some(dir.path().join(format!("{tag}.json"))),
        parallel: true,
        wallclock: false,
    };
    run(&cfg("a")).expect("first run");
    run(&cfg("b")).expect("second run");
    let a = std::fs::read(dir.path().join("a.csv")).expect("csv a");
    let b = std::fs::read(dir.path().join("b.csv")).expect("csv b");
    Outcome {
        pass: a == b && !a.is_empty(),
        detail: format!("two 60-step minibatch runs: {} bytes each, identical: {}", a.len(), a == b),
    }
}

fn c16() -> Outcome {
    let (outside, spikes) = spike_reproduction().expect("spike run");
    Outcome {
        pass: outside == 0.0 && spikes >= SPIKE_THRESHOLD_COUNT,
        detail: format!(
            "KL-Shampoo, rho=3, r=8: tail outside [{}, {}] by {outside:.3}, at least {spikes} normalized entries > 2",
            SPIKE_TAIL_RANGE.0, SPIKE_TAIL_RANGE.1
        ),
    }
}

fn main() {
    let start = Instant::now();
    let st = verify(Suite::Stationarity).expect("stationarity suite");
    let gap = verify(Suite::Gap).expect("gap suite");
    let sub = verify(Suite::Subspace).expect("subspace suite");
    let desc = verify(Suite::Descent).expect("descent suite");

    let outcomes = [
        ("polar identity", c01()),
        ("spike-and-flat exactness", c02(&st)),
        ("zero gap", c03(&gap)),
        ("gap sandwich", c04(&gap)),
        ("optimal subspace", c05(&sub)),
        ("restricted stationarity", c06(&st)),
        ("sigma_P identity", c07(&st)),
        ("alpha bracket", c08()),
        ("clamp bounds", c09()),
        ("subspace tracking", c10()),
        ("newton-schulz vs exact polar", c11()),
        ("descent", c12(&desc)),
        ("measure equivalence", c13(&desc)),
        ("memory audit", c14()),
        ("determinism", c15()),
        ("spike-and-flat reproduction", c16()),
    ];

    let mut failed = Vec::new();
    for (i, (name, o)) in outcomes.iter().enumerate() {
        let id = i as u8 + 1;
        println!("{} [{id:02}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    println!(
        "{} passed, {} failed in {:.1}s",
        outcomes.len() - failed.len(),
        failed.len(),
        start.elapsed().as_secs_f64()
    );
    if failed != KNOWN_UNATTAINABLE {
        eprintln!("failing criteria {failed:?} differ from the documented set {KNOWN_UNATTAINABLE:?}");
        std::process::exit(1);
    }
}
