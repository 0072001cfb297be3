//! Per-parameter optimizer state behind one interface, plus the invariant
//! checks a run applies after every logged step.

use serde::{Deserialize, Serialize};

use crate::baselines::{adam_step, init_klshampoo, klshampoo_step, muon_step, AdamState, KlShampooState, MuonState};
use crate::error::{Error, Result};
use crate::kl_analysis::measure::{measured_constants, mixed_norm_measure};
use crate::linalg::{op_norm, orthogonality_error, Mat};
use crate::state::{init_state, Hyper, ProState};
use crate::step::{ablation_step, pro_step, smok_hop_step, AblationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Pro,
    SmokHop,
    SubspaceOnly,
    ComplementOnly,
    Klshampoo,
    Muon,
    Adam,
}

impl Optimizer {
    pub fn uses_pro_state(&self) -> bool {
        matches!(
            self,
            Optimizer::Pro | Optimizer::SmokHop | Optimizer::SubspaceOnly | Optimizer::ComplementOnly
        )
    }
}

/// Bookkeeping for the two-sided eigenvalue bound on a Pro-family state:
/// `1/C² ≤ λ ≤ Θ` with `Θ = max(‖L₀‖, ‖S₀‖, μ⊥₀, C² G_max²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampTracker {
    pub initial_max: f64,
    /// Largest `‖G‖_op` seen so far.
    pub grad_max: f64,
}

impl ClampTracker {
    pub fn new(st: &ProState) -> Self {
        Self {
            initial_max: st.eig_l.values.max().max(st.eig_s.values.max()).max(st.mu_perp),
            grad_max: 0.0,
        }
    }

    pub fn observe(&mut self, g: &Mat) {
        self.grad_max = self.grad_max.max(op_norm(g));
    }

    pub fn theta(&self, st: &ProState) -> f64 {
        let c = st.ceilings.max();
        self.initial_max.max(c * c * self.grad_max * self.grad_max)
    }

    /// `Err` naming the first violated bound.
    pub fn check(&self, st: &ProState, step: usize) -> Result<()> {
        let theta = self.theta(st);
        let c = st.ceilings;
        let slack = 1e-12;
        let families = [
            ("L", st.eig_l.values.min(), st.eig_l.values.max(), c.floor_l()),
            ("S", st.eig_s.values.min(), st.eig_s.values.max(), c.floor_s()),
            ("mu_perp", st.mu_perp, st.mu_perp, c.floor_mu()),
        ];
        for (name, lo, hi, floor) in families {
            if lo < floor * (1.0 - slack) || hi > theta * (1.0 + slack) {
                return Err(Error::Invariant {
                    step,
                    what: format!("{name} eigenvalues [{lo:e}, {hi:e}] outside [{floor:e}, {theta:e}]"),
                });
            }
        }
        let orth = orthogonality_error(&st.basis);
        if orth > 1e-8 {
            return Err(Error::Invariant {
                step,
                what: format!("basis orthogonality error {orth:e}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamState {
    /// Created from the first gradient.
    Pending,
    Pro { state: ProState, clamp: ClampTracker },
    Klshampoo(KlShampooState),
    Muon(MuonState),
    Adam(AdamState),
}

impl ParamState {
    pub fn new(opt: Optimizer, shape: (usize, usize), h: &Hyper) -> Result<Self> {
        let (m, n) = shape;
        Ok(match opt {
            o if o.uses_pro_state() => ParamState::Pending,
            Optimizer::Klshampoo => ParamState::Klshampoo(init_klshampoo(m, n, h)?),
            Optimizer::Muon => ParamState::Muon(MuonState::new(m, n)),
            _ => ParamState::Adam(AdamState::new(m, n)),
        })
    }

    pub fn step(&mut self, opt: Optimizer, w: &mut Mat, g: &Mat, h: &Hyper) -> Result<()> {
        if let ParamState::Pending = self {
            let state = init_state(g, h)?;
            let clamp = ClampTracker::new(&state);
            *self = ParamState::Pro { state, clamp };
        }
        match self {
            ParamState::Pro { state, clamp } => {
                clamp.observe(&state.orientation.apply(g));
                match opt {
                    Optimizer::Pro => pro_step(w, g, state, h)?,
                    Optimizer::SmokHop => smok_hop_step(w, g, state, h)?,
                    Optimizer::SubspaceOnly => ablation_step(AblationKind::SubspaceOnly, w, g, state, h)?,
                    Optimizer::ComplementOnly => ablation_step(AblationKind::ComplementOnly, w, g, state, h)?,
                    other => unreachable!("{other:?} does not use a Pro state"),
                };
            }
            ParamState::Klshampoo(st) => {
                klshampoo_step(w, g, st, h)?;
            }
            ParamState::Muon(st) => {
                muon_step(w, g, st, h)?;
            }
            ParamState::Adam(st) => {
                adam_step(w, g, st, h)?;
            }
            ParamState::Pending => unreachable!("initialized above"),
        }
        Ok(())
    }

    /// Smallest and largest stored preconditioner eigenvalue, if any.
    pub fn eigen_range(&self) -> Option<(f64, f64)> {
        match self {
            ParamState::Pro { state, .. } => Some(state.eigen_range()),
            ParamState::Klshampoo(st) => Some((
                st.eig_l.values.min().min(st.eig_r.values.min()),
                st.eig_l.values.max().max(st.eig_r.values.max()),
            )),
            _ => None,
        }
    }

    /// Mixed-norm measure of `grad` under the constants this state applies.
    pub fn measure(&self, grad: &Mat, h: &Hyper) -> Option<f64> {
        match self {
            ParamState::Pro { state, .. } => {
                let k = measured_constants(state, h);
                mixed_norm_measure(&state.orientation.apply(grad), &state.basis, &k).ok()
            }
            _ => None,
        }
    }

    pub fn check_invariants(&self, step: usize) -> Result<()> {
        match self {
            ParamState::Pro { state, clamp } => clamp.check(state, step),
            _ => Ok(()),
        }
    }
}
