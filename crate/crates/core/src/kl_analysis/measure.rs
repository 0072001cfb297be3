//! Stationary reference values, the mixed-norm stationarity measure, and
//! per-step descent checks on deterministic quadratics.

use serde::{Deserialize, Serialize};

use super::model::{Side, SpikedModel};
use super::objective::RightFactor;
use super::stationary::{solve_restricted_stationary, SolverConfig, StationaryPair};
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, nuclear_norm, op_norm, projector, Mat};
use crate::state::{aspect_scale, init_state, Hyper, ProState};
use crate::step::{applied_inverse_roots, pro_step, smok_hop_step};

/// `Tr(L⁻¹ E[G R̂⁻¹ Gᵀ]) = E‖L^{-1/2} G R̂^{-1/2}‖_F²`.
pub fn sigma_p(model: &SpikedModel, l: &Mat, rhat: &RightFactor) -> Result<f64> {
    let moment = model.expected_whitened(Side::Left, &rhat.inverse()?);
    Ok((inverse_spd(l)? * moment).trace())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaPReport {
    pub sigma_p: f64,
    /// `mn`.
    pub reference: f64,
    /// `Tr(S⁻¹ UᵀΦ_L U)`.
    pub subspace_trace: f64,
    /// `mr`.
    pub subspace_reference: f64,
    pub pair: StationaryPair,
}

impl SigmaPReport {
    pub fn max_error(&self) -> f64 {
        (self.sigma_p - self.reference)
            .abs()
            .max((self.subspace_trace - self.subspace_reference).abs())
    }
}

/// Solve the restricted problem on `u` and evaluate both stationary traces.
pub fn sigma_p_stationary_check(model: &SpikedModel, u: &Mat, cfg: &SolverConfig) -> Result<SigmaPReport> {
    let (m, n) = model.dims();
    let r = u.ncols();
    let pair = solve_restricted_stationary(model, u, cfg)?;
    let sp = sigma_p(model, &pair.l, &pair.rhat)?;
    let RightFactor::Restricted { s, .. } = &pair.rhat else {
        unreachable!("restricted solver returns a restricted factor")
    };
    let phi = model.expected_whitened(Side::Right, &inverse_spd(&pair.l)?);
    let subspace_trace = (inverse_spd(s)? * u.transpose() * phi * u).trace();
    Ok(SigmaPReport {
        sigma_p: sp,
        reference: (m * n) as f64,
        subspace_trace,
        subspace_reference: (m * r) as f64,
        pair,
    })
}

/// Constants of the mixed-norm measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureConstants {
    pub aspect: f64,
    pub clip: f64,
    pub theta: f64,
    pub alpha: f64,
}

/// `(c_a/(C√Θ))‖∇f P⊥‖_* + (α/Θ)‖∇f U‖_F²`, with `U` on the column side.
pub fn mixed_norm_measure(grad: &Mat, u: &Mat, k: &MeasureConstants) -> Result<f64> {
    if u.nrows() != grad.ncols() {
        return Err(Error::Shape {
            context: "measure basis",
            expected: (grad.ncols(), u.ncols()),
            actual: u.shape(),
        });
    }
    let n = grad.ncols();
    let on = grad * u;
    let off = grad * (Mat::identity(n, n) - projector(u));
    Ok(k.aspect / (k.clip * k.theta.sqrt()) * nuclear_norm(&off) + k.alpha / k.theta * on.norm_squared())
}

/// Constants for the descent inequality measured from the damped inverse
/// roots a state is about to apply.
///
/// `clip = 1/(√λ_L,min + ε)`, `theta = (√λ_max + ε)²` over `L` and `S`,
/// so that `⟨∇f, Δ⟩ ≥` the mixed measure holds for an exact-polar step.
pub fn measured_constants(st: &ProState, h: &Hyper) -> MeasureConstants {
    let lmin = st.eig_l.values.min();
    let lmax = st.eig_l.values.max().max(st.eig_s.values.max());
    let (m, n) = st.shape;
    MeasureConstants {
        aspect: aspect_scale(m, n),
        clip: 1.0 / (lmin.sqrt() + h.eps),
        theta: (lmax.sqrt() + h.eps).powi(2),
        alpha: h.alpha_kl,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DescentMethod {
    /// Pro-KLShampoo; the caller chooses the polar mode through `Hyper`.
    Pro,
    SmokHop,
}

/// `f(W) = ½‖W − W*‖_F²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub target: Mat,
}

impl Quadratic {
    pub fn loss(&self, w: &Mat) -> f64 {
        0.5 * (w - &self.target).norm_squared()
    }

    pub fn grad(&self, w: &Mat) -> Mat {
        w - &self.target
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentRun {
    pub method: DescentMethod,
    pub lr: f64,
    pub losses: Vec<f64>,
    /// Largest `f(W₊) − f(W) − predicted` over steps; `≤ 0` means every step
    /// met its bound.
    pub worst_slack: f64,
    pub monotone: bool,
}

/// Run `steps` deterministic steps from `w0`. Momentum and weight decay are
/// forced to zero so that the applied direction is a function of `∇f` alone.
pub fn descent_run(
    problem: &Quadratic,
    w0: &Mat,
    method: DescentMethod,
    h: &Hyper,
    steps: usize,
) -> Result<DescentRun> {
    let h = Hyper {
        momentum: 0.0,
        weight_decay: 0.0,
        ..h.clone()
    };
    h.validate()?;
    let mut w = w0.clone();
    let mut st = init_state(&problem.grad(&w), &h)?;
    let (m, n) = st.shape;
    let l_op = m.min(n) as f64;
    let mut losses = vec![problem.loss(&w)];
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..steps {
        let g = problem.grad(&w);
        let f0 = *losses.last().expect("non-empty");
        let (dl, ds) = applied_inverse_roots(&st, &h);
        let before = w.clone();
        let bound = match method {
            DescentMethod::Pro => {
                let k = measured_constants(&st, &h);
                let go = st.orientation.apply(&g);
                let measure = mixed_norm_measure(&go, &st.basis, &k)?;
                let sigma_kl = op_norm(&(&dl * &go * &st.basis * &ds));
                pro_step(&mut w, &g, &mut st, &h)?;
                -h.lr * measure + h.lr * h.lr * l_op * (k.aspect.powi(2) + (h.alpha_kl * sigma_kl).powi(2))
            }
            DescentMethod::SmokHop => {
                let dmu = 1.0 / (st.mu_perp.sqrt() + h.eps);
                let min_l = dl.symmetric_eigenvalues().min();
                let min_r = ds.symmetric_eigenvalues().min().min(dmu);
                let theta = 1.0 / (min_l * min_r);
                smok_hop_step(&mut w, &g, &mut st, &h)?;
                -h.lr / theta * g.norm_squared() + 0.5 * (&w - &before).norm_squared()
            }
        };
        let f1 = problem.loss(&w);
        if !f1.is_finite() {
            return Err(Error::NonFinite("descent loss"));
        }
        worst = worst.max(f1 - (f0 + bound));
        losses.push(f1);
    }
    let monotone = losses.windows(2).all(|p| p[1] <= p[0]);
    Ok(DescentRun {
        method,
        lr: h.lr,
        losses,
        worst_slack: if steps == 0 { 0.0 } else { worst },
        monotone,
    })
}

pub const DESCENT_SWEEP: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentSweep {
    pub runs: Vec<DescentRun>,
    /// Largest swept rate whose run is monotone with every bound met.
    pub selected: Option<f64>,
}

pub fn descent_sweep(
    problem: &Quadratic,
    w0: &Mat,
    method: DescentMethod,
    h: &Hyper,
    steps: usize,
) -> Result<DescentSweep> {
    let runs = DESCENT_SWEEP
        .iter()
        .map(|&lr| descent_run(problem, w0, method, &Hyper { lr, ..h.clone() }, steps))
        .collect::<Result<Vec<_>>>()?;
    let selected = runs
        .iter()
        .find(|r| r.monotone && r.worst_slack <= 1e-12 * r.losses[0].max(1.0))
        .map(|r| r.lr);
    Ok(DescentSweep { runs, selected })
}
