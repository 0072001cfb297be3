//! Optimizer steps for the restricted preconditioner family.
//!
//! [`pro_step`] runs the five phases of the practical algorithm: Nesterov
//! momentum and projection, the update direction, statistics EMAs on the raw
//! gradient (with eigenvalue clipping), subspace tracking, and the periodic
//! eigenbasis refresh. [`smok_hop_step`] and [`ablation_step`] reuse the same
//! machinery with a different update direction.

use crate::error::{Error, Result};
use crate::linalg::{
    orthonormal_factor, scale_columns, scale_rows, symmetrize, thin_qr, Mat,
    Vector,
};
use crate::state::{aspect_scale, apply_clip, Hyper, ProState};

/// Split of an update direction into the tracked-subspace part and the
/// (orthogonalized) complement part.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDecomposition {
    /// `L^{-1/2} Ĝ U S^{-1/2} Uᵀ`.
    pub delta_sub: Mat,
    /// Complement update, already multiplied by `aspect`.
    pub delta_res: Mat,
    /// `c_a = √max(1, m/n)` of the original shape.
    pub aspect: f64,
}

impl UpdateDecomposition {
    /// `Δ_res + α Δ_sub`.
    pub fn combined(&self, alpha: f64) -> Mat {
        &self.delta_res + &self.delta_sub * alpha
    }

    fn transposed(self) -> Self {
        Self {
            delta_sub: self.delta_sub.transpose(),
            delta_res: self.delta_res.transpose(),
            aspect: self.aspect,
        }
    }
}

/// Which components of the update a step applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationKind {
    /// Complement update zeroed.
    SubspaceOnly,
    /// Subspace update zeroed.
    ComplementOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Pro,
    SmokHop,
    Ablation(AblationKind),
}

/// Diagnostics of one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Update components in the original frame, before the step size.
    pub decomposition: UpdateDecomposition,
    /// The direction actually applied (`W ← (1−ηλ)W − η·direction`).
    pub direction: Mat,
    /// Subspace tracking was skipped because its QR target was rank deficient.
    pub tracking_skipped: bool,
    /// The eigenbases were refreshed this step.
    pub refreshed: bool,
}

/// Result of one subspace-tracking sub-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackOutcome {
    Updated,
    /// Rank-deficient tracking target; the previous `U` is kept.
    Skipped,
}

fn damped_inv_sqrt(v: f64, eps: f64) -> f64 {
    1.0 / (v.max(0.0).sqrt() + eps)
}

fn check_inputs(w: &Mat, g: &Mat, st: &ProState) -> Result<()> {
    if g.shape() != st.shape {
        return Err(Error::Shape {
            context: "gradient",
            expected: st.shape,
            actual: g.shape(),
        });
    }
    if w.shape() != st.shape {
        return Err(Error::Shape {
            context: "weight",
            expected: st.shape,
            actual: w.shape(),
        });
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(())
}

/// `Q_L Diag(1/(√λ_L+ε)) Q_Lᵀ`.
fn damped_l_inv_sqrt(st: &ProState, eps: f64) -> Mat {
    st.eig_l.map(|v| damped_inv_sqrt(v, eps))
}

fn damped_s_inv_sqrt(st: &ProState, eps: f64) -> Mat {
    st.eig_s.map(|v| damped_inv_sqrt(v, eps))
}

/// Update components for an oriented-frame `ĝ`.
fn direction_oriented(
    g_hat: &Mat,
    st: &ProState,
    h: &Hyper,
    variant: Variant,
    aspect: f64,
) -> UpdateDecomposition {
    let u = &st.basis;
    let l_inv_sqrt = damped_l_inv_sqrt(st, h.eps);
    let g_par = g_hat * u;
    let g_perp = g_hat - &g_par * u.transpose();

    let delta_sub = &l_inv_sqrt * &g_par * damped_s_inv_sqrt(st, h.eps) * u.transpose();
    let whitened_perp = &l_inv_sqrt * g_perp;
    let delta_res = match variant {
        // with r = n the complement is empty; normalizing its roundoff would
        // blow it up to unit scale
        _ if u.ncols() == u.nrows() => Mat::zeros(g_hat.nrows(), g_hat.ncols()),
        Variant::SmokHop => whitened_perp * damped_inv_sqrt(st.mu_perp, h.eps),
        _ => h.polar.apply(&whitened_perp, &h.ns) * aspect,
    };
    UpdateDecomposition {
        delta_sub,
        delta_res,
        aspect,
    }
}

/// Update components `(Δ_sub, Δ_res)` for an original-frame `ĝ` using the
/// current state. Eigenvalues are assumed already clipped.
pub fn update_direction(g_hat: &Mat, st: &ProState, h: &Hyper) -> UpdateDecomposition {
    let g = st.orientation.apply(g_hat);
    let aspect = aspect_scale(st.shape.0, st.shape.1);
    let d = direction_oriented(&g, st, h, Variant::Pro, aspect);
    match st.orientation {
        crate::state::Orientation::Right => d,
        crate::state::Orientation::Left => d.transposed(),
    }
}

/// Statistics phase on the raw oriented gradient: eigenvalue EMAs (each
/// followed by its clip), then the `L` and `S` EMAs.
///
/// Line order matters: `μ⊥` is updated with the freshly updated `λ_L`, the
/// `L` EMA uses the updated `λ_S` and `μ⊥`, and the `S` EMA uses the
/// updated `λ_L`.
fn update_statistics(g: &Mat, st: &mut ProState, h: &Hyper) {
    let (m, n) = g.shape();
    let r = st.rank();
    let beta = h.beta2;
    let u = &st.basis;
    let gt = g * u;
    let gp = g - &gt * u.transpose();

    let inv_sqrt = |v: &Vector| v.map(|x| 1.0 / x.sqrt());
    let ql_t = st.eig_l.basis.transpose();
    let gt_qs = &gt * &st.eig_s.basis;
    let a = scale_columns(&(&ql_t * &gt_qs), &inv_sqrt(&st.eig_s.values));
    let b = scale_rows(&(&ql_t * &gt_qs), &inv_sqrt(&st.eig_l.values));
    let ldiag = Vector::from_fn(m, |i, _| a.row(i).norm_squared() / r as f64);
    let rdiag = Vector::from_fn(r, |j, _| b.column(j).norm_squared() / m as f64);
    let qgp = &ql_t * &gp;
    let e_res = Vector::from_fn(m, |i, _| qgp.row(i).norm_squared());

    let mu_prev = st.mu_perp;
    for i in 0..m {
        let target = (r as f64 * ldiag[i] + e_res[i] / mu_prev) / n as f64;
        st.eig_l.values[i] = beta * st.eig_l.values[i] + (1.0 - beta) * target;
    }
    st.eig_l.clip_floor(st.ceilings.floor_l());
    for j in 0..r {
        st.eig_s.values[j] = beta * st.eig_s.values[j] + (1.0 - beta) * rdiag[j];
    }
    st.eig_s.clip_floor(st.ceilings.floor_s());
    if n > r {
        let whitened: f64 = (0..m).map(|i| e_res[i] / st.eig_l.values[i]).sum();
        let target = whitened / (m * (n - r)) as f64;
        st.mu_perp = (beta * st.mu_perp + (1.0 - beta) * target).max(st.ceilings.floor_mu());
    }

    let c = scale_columns(&gt_qs, &inv_sqrt(&st.eig_s.values));
    let l_target = (&c * c.transpose() + &gp * gp.transpose() / st.mu_perp) / n as f64;
    st.l = symmetrize(&(&st.l * beta + l_target * (1.0 - beta)));
    let d = scale_rows(&(&ql_t * &gt), &inv_sqrt(&st.eig_l.values));
    let s_target = d.transpose() * &d / m as f64;
    st.s = symmetrize(&(&st.s * beta + s_target * (1.0 - beta)));
}

/// Oriented-frame tracking sub-step.
fn track_oriented(g: &Mat, st: &mut ProState, h: &Hyper) -> TrackOutcome {
    let m = g.nrows() as f64;
    let beta = h.beta2;
    let u = st.basis.clone();
    let l_inv = st.eig_l.map(|v| 1.0 / v);
    let target = &u * &st.s * beta + g.transpose() * (&l_inv * (g * &u)) * ((1.0 - beta) / m);
    match thin_qr(&target) {
        Ok(qr) => {
            let rot = u.transpose() * &qr.q;
            st.s = symmetrize(&(rot.transpose() * &st.s * &rot));
            st.eig_s.basis = rot.transpose() * &st.eig_s.basis;
            st.basis = qr.q;
            TrackOutcome::Updated
        }
        Err(_) => TrackOutcome::Skipped,
    }
}

/// One power-iteration step on the whitened second moment: `U₊ = qr(β₂US +
/// (1−β₂)/m·Gᵀ L^{-1} G U)`, then `S` and `Q_S` are rotated into the new
/// basis by `T = UᵀU₊`.
///
/// If the QR target is rank deficient the previous `U` is kept and
/// [`TrackOutcome::Skipped`] is returned.
pub fn subspace_track(st: &mut ProState, g: &Mat, h: &Hyper) -> Result<TrackOutcome> {
    if g.shape() != st.shape {
        return Err(Error::Shape {
            context: "gradient",
            expected: st.shape,
            actual: g.shape(),
        });
    }
    let g = st.orientation.apply(g);
    Ok(track_oriented(&g, st, h))
}

/// `Q_L ← qr(L Q_L)`, `Q_S ← qr(S Q_S)`.
pub fn refresh_eigenbasis(st: &mut ProState) {
    st.eig_l.basis = orthonormal_factor(&(&st.l * &st.eig_l.basis));
    st.eig_s.basis = orthonormal_factor(&(&st.s * &st.eig_s.basis));
}

/// Core step in the oriented frame. `w` and `g` are oriented; `aspect` is
/// the original-shape aspect scale.
fn step_oriented(
    w: &mut Mat,
    g: &Mat,
    st: &mut ProState,
    h: &Hyper,
    variant: Variant,
    aspect: f64,
) -> (UpdateDecomposition, Mat, bool, bool) {
    let mu = h.momentum;
    let g_hat = match variant {
        Variant::SmokHop => {
            st.momentum = &st.momentum * mu + g * (1.0 - mu);
            st.momentum.clone()
        }
        _ => {
            st.momentum = &st.momentum * mu + g;
            g + &st.momentum * mu
        }
    };

    let decomposition = direction_oriented(&g_hat, st, h, variant, aspect);
    let direction = match variant {
        Variant::Pro => decomposition.combined(h.alpha_kl),
        Variant::SmokHop => decomposition.combined(1.0),
        Variant::Ablation(AblationKind::SubspaceOnly) => &decomposition.delta_sub * h.alpha_kl,
        Variant::Ablation(AblationKind::ComplementOnly) => decomposition.delta_res.clone(),
    };
    *w *= 1.0 - h.lr * h.weight_decay;
    *w -= &direction * h.lr;

    update_statistics(g, st, h);
    let tracked = track_oriented(g, st, h);

    st.step_count += 1;
    let refreshed = st.step_count.is_multiple_of(h.qr_period);
    if refreshed {
        refresh_eigenbasis(st);
    }
    // statistics already clipped each eigenvalue family; this is a no-op
    // unless the state was edited externally
    let ceilings = st.ceilings;
    apply_clip(st, &ceilings);
    (
        decomposition,
        direction,
        tracked == TrackOutcome::Skipped,
        refreshed,
    )
}

fn run_step(
    w: &mut Mat,
    g: &Mat,
    st: &mut ProState,
    h: &Hyper,
    variant: Variant,
) -> Result<StepReport> {
    check_inputs(w, g, st)?;
    let orient = st.orientation;
    let mut w_o = orient.apply(w);
    let g_o = orient.apply(g);
    let aspect = aspect_scale(st.shape.0, st.shape.1);
    let (decomposition, direction, tracking_skipped, refreshed) =
        step_oriented(&mut w_o, &g_o, st, h, variant, aspect);
    *w = orient.apply(&w_o);
    let (decomposition, direction) = match orient {
        crate::state::Orientation::Right => (decomposition, direction),
        crate::state::Orientation::Left => (decomposition.transposed(), direction.transpose()),
    };
    Ok(StepReport {
        decomposition,
        direction,
        tracking_skipped,
        refreshed,
    })
}

/// One practical Pro-KLShampoo step, updating `w` and `st` in place.
pub fn pro_step(w: &mut Mat, g: &Mat, st: &mut ProState, h: &Hyper) -> Result<StepReport> {
    run_step(w, g, st, h, Variant::Pro)
}

/// Smok-Hop: the scalar-whitened complement `μ⊥^{-1/2} L^{-1/2} Ĝ⊥` in place
/// of the orthogonalized one, `α_kl = 1`, and EMA momentum.
pub fn smok_hop_step(w: &mut Mat, g: &Mat, st: &mut ProState, h: &Hyper) -> Result<StepReport> {
    run_step(w, g, st, h, Variant::SmokHop)
}

/// Pro-KLShampoo with one update component zeroed; statistics, tracking and
/// refresh are unchanged.
pub fn ablation_step(
    kind: AblationKind,
    w: &mut Mat,
    g: &Mat,
    st: &mut ProState,
    h: &Hyper,
) -> Result<StepReport> {
    run_step(w, g, st, h, Variant::Ablation(kind))
}

/// Restricted preconditioner operators `(L^{-1/2}, S^{-1/2})` as applied by
/// the step (damped, lagged basis), in the oriented frame.
pub fn applied_inverse_roots(st: &ProState, h: &Hyper) -> (Mat, Mat) {
    (damped_l_inv_sqrt(st, h.eps), damped_s_inv_sqrt(st, h.eps))
}
