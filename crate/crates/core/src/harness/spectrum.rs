//! Tail-normalized preconditioner spectra.

use serde::{Deserialize, Serialize};

use super::optim::ParamState;
use super::run::Checkpoint;
use crate::baselines::{klshampoo_refresh, KlShampooState};
use crate::state::ProState;
use crate::step::refresh_eigenbasis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpectrum {
    /// `L`, `R` (KL-Shampoo) or `R_hat` (`S` eigenvalues then `μ⊥` repeated).
    pub factor: String,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Mean of the entries at positions `r, r+1, …` (0-based); `None` when
    /// there are none, in which case `normalized` equals `eigenvalues`.
    pub tail_mean: Option<f64>,
    pub normalized: Vec<f64>,
}

impl FactorSpectrum {
    pub fn new(factor: &str, mut values: Vec<f64>, r: usize) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        let tail = values.get(r..).filter(|t| !t.is_empty());
        let tail_mean = tail.map(|t| t.iter().sum::<f64>() / t.len() as f64);
        let scale = tail_mean.unwrap_or(1.0);
        Self {
            factor: factor.to_string(),
            normalized: values.iter().map(|v| v / scale).collect(),
            eigenvalues: values,
            tail_mean,
        }
    }

    /// Normalized entries beyond the first `r`.
    pub fn tail(&self, r: usize) -> &[f64] {
        self.normalized.get(r..).unwrap_or(&[])
    }

    /// Number of normalized entries above `threshold`.
    pub fn spikes_above(&self, threshold: f64) -> usize {
        self.normalized.iter().filter(|&&v| v > threshold).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpectrum {
    pub param: usize,
    pub shape: (usize, usize),
    pub factors: Vec<FactorSpectrum>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDump {
    pub step: usize,
    pub rank: usize,
    pub params: Vec<ParamSpectrum>,
}

/// Spectra of a Pro-family state after a forced eigenbasis refresh.
/// Factors are in the oriented frame.
pub fn pro_spectrum(st: &ProState, r: usize) -> Vec<FactorSpectrum> {
    let mut st = st.clone();
    refresh_eigenbasis(&mut st);
    let (_, n) = st.oriented_shape();
    let mut rhat: Vec<f64> = st.eig_s.values.iter().copied().collect();
    rhat.extend(std::iter::repeat_n(st.mu_perp, n - st.rank()));
    vec![
        FactorSpectrum::new("L", st.eig_l.values.iter().copied().collect(), r),
        FactorSpectrum::new("R_hat", rhat, r),
    ]
}

/// Spectra of a KL-Shampoo state after a forced eigenbasis refresh.
pub fn klshampoo_spectrum(st: &KlShampooState, r: usize) -> Vec<FactorSpectrum> {
    let mut st = st.clone();
    klshampoo_refresh(&mut st);
    vec![
        FactorSpectrum::new("L", st.eig_l.values.iter().copied().collect(), r),
        FactorSpectrum::new("R", st.eig_r.values.iter().copied().collect(), r),
    ]
}

/// Every parameter of a checkpoint that carries a preconditioner.
pub fn dump_spectrum(ck: &Checkpoint, r: usize) -> SpectrumDump {
    let params = ck
        .states
        .iter()
        .zip(&ck.params)
        .enumerate()
        .filter_map(|(i, (s, w))| {
            let factors = match s {
                ParamState::Pro { state, .. } => pro_spectrum(state, r),
                ParamState::Klshampoo(st) => klshampoo_spectrum(st, r),
                _ => return None,
            };
            Some(ParamSpectrum {
                param: i,
                shape: w.shape(),
                factors,
            })
        })
        .collect();
    SpectrumDump {
        step: ck.step,
        rank: r,
        params,
    }
}
