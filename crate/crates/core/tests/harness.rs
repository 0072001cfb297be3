//! End-to-end behaviour of the training harness and its outputs.

use pro_klshampoo::baselines::{init_klshampoo, klshampoo_step};
use pro_klshampoo::error::Error;
use pro_klshampoo::harness::spectrum::klshampoo_spectrum;
use pro_klshampoo::harness::verify::{regression_config, spike_reproduction_config, verify, Suite};
use pro_klshampoo::harness::{dump_spectrum, run, Checkpoint, Optimizer, ParamState, RunConfig};
use pro_klshampoo::linalg::Mat;
use pro_klshampoo::polar::PolarMode;
use pro_klshampoo::state::{init_state, Hyper};
use pro_klshampoo::step::pro_step;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn configs_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_parse() {
    for name in ["regression", "mlp", "spiked"] {
        let cfg = RunConfig::load(&configs_dir().join(format!("{name}.toml"))).unwrap();
        assert!(cfg.steps > 0, "{name}");
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let text = "optimizer = \"pro\"\nsteps = 1\nlearning_rate = 0.1\n[task]\nkind = \"matrix_regression\"\nm = 2\nn = 2\nsamples = 4\n";
    assert!(matches!(RunConfig::from_toml(text), Err(Error::Toml(_))));
}

#[test]
fn zero_steps_logs_header_and_initial_row() {
    let mut cfg = regression_config();
    cfg.steps = 0;
    let out = run(&cfg).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.csv.lines().count(), 2);
    assert!(out.csv.starts_with("step,train_loss,grad_fro_norm,mixed_norm_measure,wallclock_ms,p0_eig_min,p0_eig_max\n"));
}

#[test]
fn csv_uses_seventeen_significant_digits() {
    let mut cfg = regression_config();
    cfg.steps = 2;
    let out = run(&cfg).unwrap();
    let row = out.csv.lines().nth(3).unwrap();
    let loss = row.split(',').nth(1).unwrap();
    let mantissa = loss.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{loss}");
    assert_eq!(loss.parse::<f64>().unwrap(), out.rows[2].train_loss);
}

#[test]
fn divergence_aborts_with_diagnostic_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = regression_config();
    cfg.optimizer = Optimizer::Adam;
    cfg.hyper.lr = 1e300;
    cfg.steps = 50;
    cfg.csv = Some(dir.path().join("nan.csv"));
    let err = run(&cfg).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    let csv = std::fs::read_to_string(dir.path().join("nan.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let loss: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!(!loss.is_finite());
}

#[test]
fn checkpoint_round_trip_and_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = spike_reproduction_config();
    cfg.steps = 30;
    cfg.eval_every = 30;
    cfg.checkpoint = Some(dir.path().join("ck.json"));
    let out = run(&cfg).unwrap();
    let back = Checkpoint::load(&dir.path().join("ck.json")).unwrap();
    assert_eq!(back, out.checkpoint);
    let dump = dump_spectrum(&back, 8);
    assert_eq!(dump.params.len(), 1);
    let r = &dump.params[0].factors[1];
    assert_eq!(r.factor, "R");
    assert!(r.tail(8).iter().all(|v| v.is_finite()));
}

#[test]
fn refresh_does_not_change_dumped_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = Hyper {
        qr_period: 1000,
        ..Hyper::default()
    };
    let mut st = init_klshampoo(5, 7, &h).unwrap();
    let mut w = Mat::zeros(5, 7);
    for _ in 0..20 {
        let g = Mat::from_fn(5, 7, |_, _| StandardNormal.sample(&mut rng));
        klshampoo_step(&mut w, &g, &mut st, &h).unwrap();
    }
    let before = klshampoo_spectrum(&st, 2);
    let mut refreshed = st.clone();
    pro_klshampoo::baselines::klshampoo_refresh(&mut refreshed);
    let after = klshampoo_spectrum(&refreshed, 2);
    for (a, b) in before.iter().zip(&after) {
        for (x, y) in a.normalized.iter().zip(&b.normalized) {
            assert!((x - y).abs() <= 1e-6);
        }
    }
}

#[test]
fn every_optimizer_trains_the_regression() {
    for (opt, lr) in [
        (Optimizer::Pro, 0.05),
        (Optimizer::SmokHop, 0.05),
        (Optimizer::SubspaceOnly, 1.0),
        (Optimizer::ComplementOnly, 0.05),
        (Optimizer::Klshampoo, 0.05),
        (Optimizer::Muon, 0.05),
        (Optimizer::Adam, 0.05),
    ] {
        let mut cfg = regression_config();
        cfg.optimizer = opt;
        cfg.hyper.lr = lr;
        cfg.eval_every = 300;
        let out = run(&cfg).unwrap();
        // the complement-only ablation never moves along the tracked top
        // directions, which carry most of this loss
        let target = if opt == Optimizer::ComplementOnly { 1.0 } else { 0.5 };
        assert!(out.final_loss() < target * out.initial_loss(), "{opt:?}: {}", out.final_loss());
        if opt.uses_pro_state() {
            assert!(matches!(out.checkpoint.states[0], ParamState::Pro { .. }));
        }
    }
}

#[test]
fn parallel_and_sequential_runs_agree() {
    let mut cfg = RunConfig::load(&configs_dir().join("mlp.toml")).unwrap();
    cfg.steps = 20;
    cfg.csv = None;
    cfg.checkpoint = None;
    cfg.parallel = true;
    let a = run(&cfg).unwrap();
    cfg.parallel = false;
    let b = run(&cfg).unwrap();
    assert_eq!(a.csv, b.csv);
}

/// Pro-KLShampoo at `r = min(m, n) − 1` with exact polar against KL-Shampoo
/// on `½‖W − W*‖²`: after 200 steps both losses are within 5% of the
/// initial loss of each other.
#[test]
fn pro_tracks_klshampoo_on_a_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (m, n) = (6, 8);
    let target = Mat::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
    let loss = |w: &Mat| 0.5 * (w - &target).norm_squared();
    let h = Hyper {
        lr: 0.1,
        rank: m.min(n) - 1,
        polar: PolarMode::Exact,
        ..Hyper::default()
    };
    let mut wp = Mat::zeros(m, n);
    let mut sp = init_state(&(&wp - &target), &h).unwrap();
    let mut wk = Mat::zeros(m, n);
    let mut sk = init_klshampoo(m, n, &h).unwrap();
    for _ in 0..200 {
        let g = &wp - &target;
        pro_step(&mut wp, &g, &mut sp, &h).unwrap();
        let g = &wk - &target;
        klshampoo_step(&mut wk, &g, &mut sk, &h).unwrap();
    }
    let f0 = loss(&Mat::zeros(m, n));
    assert!((loss(&wp) - loss(&wk)).abs() <= 0.05 * f0);
}

#[test]
fn passing_suites_pass() {
    for suite in [Suite::Identity, Suite::Bracket, Suite::Gap, Suite::Clamp] {
        let rep = verify(suite).unwrap();
        let failing: Vec<_> = rep.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
        match suite {
            Suite::Bracket => assert_eq!(failing, ["table_rows_mismatched"]),
            _ => assert!(failing.is_empty(), "{suite:?}: {failing:?}"),
        }
    }
}
