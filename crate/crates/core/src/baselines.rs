//! Reference optimizers: full KL-Shampoo (same lagged-eigenbasis EMA
//! machinery as the restricted optimizer), Muon, and Adam.
//!
//! All three take the shared [`Hyper`]; fields they do not use are ignored.
//! Adam reads `momentum` as β₁ and `beta2` as β₂.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_factor, symmetrize, Mat, Vector};
use crate::state::{aspect_scale, EigenFactor, Hyper};

/// Full two-sided KL-Shampoo state of one `m × n` parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlShampooState {
    pub shape: (usize, usize),
    /// Ceilings on `λ_L^{-1/2}` and `λ_R^{-1/2}`.
    pub ceiling_l: f64,
    pub ceiling_r: f64,
    #[serde(with = "crate::serde_mat")]
    pub momentum: Mat,
    #[serde(with = "crate::serde_mat")]
    pub l: Mat,
    #[serde(with = "crate::serde_mat")]
    pub r: Mat,
    pub eig_l: EigenFactor,
    pub eig_r: EigenFactor,
    pub step_count: u64,
}

impl KlShampooState {
    pub fn floor_l(&self) -> f64 {
        1.0 / (self.ceiling_l * self.ceiling_l)
    }

    pub fn floor_r(&self) -> f64 {
        1.0 / (self.ceiling_r * self.ceiling_r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Zero factors, identity eigenbases and every eigenvalue at `init_scale`.
pub fn init_klshampoo(m: usize, n: usize, h: &Hyper) -> Result<KlShampooState> {
    h.validate()?;
    if m == 0 || n == 0 {
        return Err(Error::Config(format!("empty parameter shape {m}x{n}")));
    }
    let ceil = |d: usize| (d as f64).min(h.clip_cap).max(h.clip_floor);
    let factor = |d: usize| EigenFactor {
        basis: Mat::identity(d, d),
        values: Vector::from_element(d, h.init_scale),
    };
    Ok(KlShampooState {
        shape: (m, n),
        ceiling_l: ceil(m),
        ceiling_r: ceil(n),
        momentum: Mat::zeros(m, n),
        l: Mat::zeros(m, m),
        r: Mat::zeros(n, n),
        eig_l: factor(m),
        eig_r: factor(n),
        step_count: 0,
    })
}

/// `L^{-1/2} Ĝ R^{-1/2}` with damped inverse roots `1/(√λ+ε)`.
pub fn klshampoo_direction(g_hat: &Mat, st: &KlShampooState, h: &Hyper) -> Mat {
    let damp = |v: f64| 1.0 / (v.max(0.0).sqrt() + h.eps);
    st.eig_l.map(damp) * g_hat * st.eig_r.map(damp)
}

/// Statistics phase with caller-supplied whitened second moments.
///
/// `left(R⁻¹)` must return `G R⁻¹ Gᵀ` (or its expectation) and
/// `right(L⁻¹)` must return `Gᵀ L⁻¹ G`. Feeding closed-form expectations
/// turns the optimizer's EMA into a deterministic fixed-point iteration.
/// The eigenvalue EMAs follow the same line order as the restricted
/// optimizer: `λ_R` and the `R` EMA see the freshly updated `λ_L`.
pub fn klshampoo_update_statistics(
    st: &mut KlShampooState,
    h: &Hyper,
    left: impl Fn(&Mat) -> Mat,
    right: impl Fn(&Mat) -> Mat,
) {
    let (m, n) = st.shape;
    let beta = h.beta2;
    let r_inv = st.eig_r.map(|v| 1.0 / v);
    let target_l = symmetrize(&(left(&r_inv) / n as f64));
    let diag_l = (st.eig_l.basis.transpose() * &target_l * &st.eig_l.basis).diagonal();
    st.eig_l.values = &st.eig_l.values * beta + diag_l * (1.0 - beta);
    st.eig_l.clip_floor(st.floor_l());

    let l_inv = st.eig_l.map(|v| 1.0 / v);
    let target_r = symmetrize(&(right(&l_inv) / m as f64));
    let diag_r = (st.eig_r.basis.transpose() * &target_r * &st.eig_r.basis).diagonal();
    st.eig_r.values = &st.eig_r.values * beta + diag_r * (1.0 - beta);
    st.eig_r.clip_floor(st.floor_r());

    st.l = symmetrize(&(&st.l * beta + target_l * (1.0 - beta)));
    st.r = symmetrize(&(&st.r * beta + target_r * (1.0 - beta)));
}

/// Advance the step counter and refresh both eigenbases every `qr_period` steps.
pub fn klshampoo_finish_step(st: &mut KlShampooState, h: &Hyper) -> bool {
    st.step_count += 1;
    let refresh = st.step_count.is_multiple_of(h.qr_period);
    if refresh {
        klshampoo_refresh(st);
    }
    refresh
}

/// `Q_L ← qr(L Q_L)`, `Q_R ← qr(R Q_R)`.
pub fn klshampoo_refresh(st: &mut KlShampooState) {
    st.eig_l.basis = orthonormal_factor(&(&st.l * &st.eig_l.basis));
    st.eig_r.basis = orthonormal_factor(&(&st.r * &st.eig_r.basis));
}

fn check(w: &Mat, g: &Mat, shape: (usize, usize)) -> Result<()> {
    for (context, a) in [("gradient", g), ("weight", w)] {
        if a.shape() != shape {
            return Err(Error::Shape {
                context,
                expected: shape,
                actual: a.shape(),
            });
        }
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(())
}

/// One KL-Shampoo step; returns the applied direction.
pub fn klshampoo_step(w: &mut Mat, g: &Mat, st: &mut KlShampooState, h: &Hyper) -> Result<Mat> {
    check(w, g, st.shape)?;
    st.momentum = &st.momentum * h.momentum + g;
    let g_hat = g + &st.momentum * h.momentum;
    let direction = klshampoo_direction(&g_hat, st, h);
    *w *= 1.0 - h.lr * h.weight_decay;
    *w -= &direction * h.lr;
    klshampoo_update_statistics(
        st,
        h,
        |r_inv| g * r_inv * g.transpose(),
        |l_inv| g.transpose() * l_inv * g,
    );
    klshampoo_finish_step(st, h);
    Ok(direction)
}

/// Muon: momentum plus orthogonalized Nesterov direction, scaled by `c_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuonState {
    #[serde(with = "crate::serde_mat")]
    pub momentum: Mat,
}

impl MuonState {
    pub fn new(m: usize, n: usize) -> Self {
        Self {
            momentum: Mat::zeros(m, n),
        }
    }
}

pub fn muon_step(w: &mut Mat, g: &Mat, st: &mut MuonState, h: &Hyper) -> Result<Mat> {
    check(w, g, st.momentum.shape())?;
    let (m, n) = g.shape();
    st.momentum = &st.momentum * h.momentum + g;
    let g_hat = g + &st.momentum * h.momentum;
    let direction = h.polar.apply(&g_hat, &h.ns) * aspect_scale(m, n);
    *w *= 1.0 - h.lr * h.weight_decay;
    *w -= &direction * h.lr;
    Ok(direction)
}

/// Bias-corrected Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    #[serde(with = "crate::serde_mat")]
    pub first: Mat,
    #[serde(with = "crate::serde_mat")]
    pub second: Mat,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(m: usize, n: usize) -> Self {
        Self {
            first: Mat::zeros(m, n),
            second: Mat::zeros(m, n),
            step_count: 0,
        }
    }
}

pub fn adam_step(w: &mut Mat, g: &Mat, st: &mut AdamState, h: &Hyper) -> Result<Mat> {
    check(w, g, st.first.shape())?;
    let (b1, b2) = (h.momentum, h.beta2);
    st.step_count += 1;
    let t = st.step_count as i32;
    st.first = &st.first * b1 + g * (1.0 - b1);
    st.second = &st.second * b2 + g.component_mul(g) * (1.0 - b2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let direction = st
        .first
        .zip_map(&st.second, |mo, v| (mo / c1) / ((v / c2).sqrt() + h.eps));
    *w *= 1.0 - h.lr * h.weight_decay;
    *w -= &direction * h.lr;
    Ok(direction)
}
