//! Per-parameter optimizer state: hyperparameters, orientation, clipping and
//! initialization from the first gradient.
//!
//! All matrices inside [`ProState`] live in the *oriented frame*: for a
//! parameter with `m > n` every gradient is transposed on entry, so that the
//! projected (restricted) side is always the column side of an `m' × n'`
//! matrix with `m' ≤ n'`. Step functions transpose their results back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd, sym_eig, Mat, SymEig, Vector};
use crate::polar::{NsConfig, PolarMode};

/// Tunables shared by every optimizer in the crate. Fields a given
/// optimizer does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub lr: f64,
    pub momentum: f64,
    pub beta2: f64,
    /// Damping added to `√λ` in every applied inverse root.
    pub eps: f64,
    pub alpha_kl: f64,
    /// Eigenbasis refresh period, in steps.
    pub qr_period: u64,
    pub ns: NsConfig,
    pub rank: usize,
    pub init_scale: f64,
    pub weight_decay: f64,
    pub clip_cap: f64,
    pub clip_floor: f64,
    pub polar: PolarMode,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            momentum: 0.95,
            beta2: 0.95,
            eps: 1e-8,
            alpha_kl: 0.01,
            qr_period: 10,
            ns: NsConfig::default(),
            rank: 32,
            init_scale: 0.1,
            weight_decay: 0.0,
            clip_cap: 4000.0,
            clip_floor: 10.0,
            polar: PolarMode::NewtonSchulz,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail("lr must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return fail("beta2 must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return fail("eps must be > 0");
        }
        if !(self.alpha_kl > 0.0) {
            return fail("alpha_kl must be > 0");
        }
        if self.qr_period == 0 {
            return fail("qr_period must be >= 1");
        }
        if self.ns.iterations == 0 {
            return fail("ns.iterations must be >= 1");
        }
        if self.rank == 0 {
            return fail("rank must be >= 1");
        }
        if !(self.init_scale > 0.0) {
            return fail("init_scale must be > 0");
        }
        if !(self.weight_decay >= 0.0) {
            return fail("weight_decay must be >= 0");
        }
        if !(self.clip_cap > 0.0 && self.clip_floor > 0.0) {
            return fail("clip_cap and clip_floor must be > 0");
        }
        Ok(())
    }
}

/// Which side of the parameter carries the projected factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// `m ≤ n`: the right factor is restricted.
    Right,
    /// `m > n`: roles transposed, the left factor is restricted.
    Left,
}

pub fn orientation(m: usize, n: usize) -> Orientation {
    if m <= n {
        Orientation::Right
    } else {
        Orientation::Left
    }
}

impl Orientation {
    /// Bring an original-frame matrix into the oriented frame (or back).
    pub fn apply(&self, a: &Mat) -> Mat {
        match self {
            Orientation::Right => a.clone(),
            Orientation::Left => a.transpose(),
        }
    }

    pub fn oriented_shape(&self, m: usize, n: usize) -> (usize, usize) {
        match self {
            Orientation::Right => (m, n),
            Orientation::Left => (n, m),
        }
    }
}

/// Aspect-ratio scale `√max(1, m/n)` of the orthogonalized complement,
/// always computed from the original shape.
pub fn aspect_scale(m: usize, n: usize) -> f64 {
    (m as f64 / n as f64).max(1.0).sqrt()
}

/// Upper limits on the inverse square roots of the stored eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipCeilings {
    /// Unrestricted-side factor `L`.
    pub l: f64,
    /// Subspace factor `S`.
    pub s: f64,
    /// Complement scalar `μ⊥`.
    pub mu: f64,
}

impl ClipCeilings {
    pub fn max(&self) -> f64 {
        self.l.max(self.s).max(self.mu)
    }

    pub fn floor_l(&self) -> f64 {
        1.0 / (self.l * self.l)
    }

    pub fn floor_s(&self) -> f64 {
        1.0 / (self.s * self.s)
    }

    pub fn floor_mu(&self) -> f64 {
        1.0 / (self.mu * self.mu)
    }
}

/// Dimension-aware ceilings for an `m × n` parameter (original shape).
pub fn clip_ceilings(m: usize, n: usize, h: &Hyper) -> ClipCeilings {
    let ceil = |d: usize| (d as f64).min(h.clip_cap).max(h.clip_floor);
    let (mo, no) = orientation(m, n).oriented_shape(m, n);
    ClipCeilings {
        l: ceil(mo),
        s: ceil(no),
        mu: ceil(mo.max(no)),
    }
}

/// Eigenbasis and eigenvalue estimates of a preconditioner factor.
///
/// Unlike [`SymEig`], the basis is lagged (refreshed every `qr_period`
/// steps) and the values are running EMAs, so neither sortedness nor exact
/// orthogonality of the basis is guaranteed between refreshes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenFactor {
    #[serde(with = "crate::serde_mat")]
    pub basis: Mat,
    #[serde(with = "crate::serde_mat::vector")]
    pub values: Vector,
}

impl EigenFactor {
    pub fn from_sym_eig(eig: SymEig, init_value: f64) -> Self {
        let n = eig.values.len();
        Self {
            basis: eig.basis,
            values: Vector::from_element(n, init_value),
        }
    }

    /// `Q Diag(f(λ)) Qᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        crate::linalg::congruence_diag(&self.basis, &self.values.map(f))
    }

    pub fn clip_floor(&mut self, floor: f64) {
        self.values.apply(|v| *v = v.max(floor));
    }
}

/// Full Pro-KLShampoo state of one `m × n` parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProState {
    /// Original `(m, n)`.
    pub shape: (usize, usize),
    pub orientation: Orientation,
    pub ceilings: ClipCeilings,
    /// Momentum buffer, oriented frame.
    #[serde(with = "crate::serde_mat")]
    pub momentum: Mat,
    /// Tracked subspace `U` (`n' × r`, orthonormal columns).
    #[serde(with = "crate::serde_mat")]
    pub basis: Mat,
    /// Unrestricted-side factor `L` (`m' × m'`).
    #[serde(with = "crate::serde_mat")]
    pub l: Mat,
    /// Subspace factor `S` (`r × r`).
    #[serde(with = "crate::serde_mat")]
    pub s: Mat,
    pub eig_l: EigenFactor,
    pub eig_s: EigenFactor,
    pub mu_perp: f64,
    pub step_count: u64,
}

impl ProState {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// `(m', n')`.
    pub fn oriented_shape(&self) -> (usize, usize) {
        self.orientation.oriented_shape(self.shape.0, self.shape.1)
    }

    /// Smallest and largest stored eigenvalue across `λ_L`, `λ_S` and `μ⊥`.
    pub fn eigen_range(&self) -> (f64, f64) {
        let all = self
            .eig_l
            .values
            .iter()
            .chain(self.eig_s.values.iter())
            .chain(std::iter::once(&self.mu_perp));
        all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Build the state from the first observed gradient.
///
/// `U` is the top-`r` right singular subspace of the oriented gradient,
/// `L = (1−β₂)/r · G̃G̃ᵀ`, `S = (1−β₂)/m' · G̃ᵀG̃` with `G̃ = G₀U`, every
/// eigenvalue estimate starts at `init_scale`, and the eigenbases are those
/// of `L` and `S`.
pub fn init_state(g0: &Mat, h: &Hyper) -> Result<ProState> {
    h.validate()?;
    let (m, n) = g0.shape();
    if g0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial gradient"));
    }
    if g0.iter().all(|&x| x == 0.0) {
        return Err(Error::Initialization(
            "first gradient is identically zero".into(),
        ));
    }
    let r = h.rank;
    if r > m.min(n) {
        return Err(Error::Config(format!(
            "rank {r} exceeds min(m, n) = {}",
            m.min(n)
        )));
    }
    let orient = orientation(m, n);
    let g = orient.apply(g0);
    let (mo, _) = g.shape();

    let decomposition = svd(&g);
    let basis = decomposition.v.columns(0, r).into_owned();
    let gt = &g * &basis;
    let l = &gt * gt.transpose() * ((1.0 - h.beta2) / r as f64);
    let s = gt.transpose() * &gt * ((1.0 - h.beta2) / mo as f64);
    let l = crate::linalg::symmetrize(&l);
    let s = crate::linalg::symmetrize(&s);
    let eig_l = EigenFactor::from_sym_eig(sym_eig(&l)?, h.init_scale);
    let eig_s = EigenFactor::from_sym_eig(sym_eig(&s)?, h.init_scale);

    Ok(ProState {
        shape: (m, n),
        orientation: orient,
        ceilings: clip_ceilings(m, n, h),
        momentum: Mat::zeros(g.nrows(), g.ncols()),
        basis,
        l,
        s,
        eig_l,
        eig_s,
        mu_perp: h.init_scale,
        step_count: 0,
    })
}

/// Floor every stored eigenvalue at `1/C²` of its own ceiling (equivalently,
/// cap each inverse square root at `C`). Nothing else is touched.
pub fn apply_clip(state: &mut ProState, c: &ClipCeilings) {
    state.eig_l.clip_floor(c.floor_l());
    state.eig_s.clip_floor(c.floor_s());
    state.mu_perp = state.mu_perp.max(c.floor_mu());
}
