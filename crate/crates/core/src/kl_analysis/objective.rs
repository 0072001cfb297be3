//! The KL objective between the gradient covariance and a Kronecker
//! factorization, up to a model constant.

use serde::{Deserialize, Serialize};

use super::model::{Side, SpikedModel};
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, logdet_spd, projector, Mat};

/// The right factor `R̂`: either dense, or restricted to
/// `U S Uᵀ + μ⊥ P⊥`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RightFactor {
    Full {
        #[serde(with = "crate::serde_mat")]
        r: Mat,
    },
    Restricted {
        #[serde(with = "crate::serde_mat")]
        u: Mat,
        #[serde(with = "crate::serde_mat")]
        s: Mat,
        mu_perp: f64,
    },
}

impl RightFactor {
    pub fn dim(&self) -> usize {
        match self {
            RightFactor::Full { r } => r.nrows(),
            RightFactor::Restricted { u, .. } => u.nrows(),
        }
    }

    pub fn dense(&self) -> Mat {
        match self {
            RightFactor::Full { r } => r.clone(),
            RightFactor::Restricted { u, s, mu_perp } => {
                let p_perp = Mat::identity(u.nrows(), u.nrows()) - projector(u);
                u * s * u.transpose() + p_perp * *mu_perp
            }
        }
    }

    /// `R̂⁻¹`; blockwise `U S⁻¹ Uᵀ + μ⊥⁻¹ P⊥` in the restricted case.
    pub fn inverse(&self) -> Result<Mat> {
        match self {
            RightFactor::Full { r } => inverse_spd(r),
            RightFactor::Restricted { u, s, mu_perp } => {
                if *mu_perp <= 0.0 {
                    return Err(Error::NotSpd);
                }
                let p_perp = Mat::identity(u.nrows(), u.nrows()) - projector(u);
                Ok(u * inverse_spd(s)? * u.transpose() + p_perp / *mu_perp)
            }
        }
    }

    /// `log det R̂`; `log det S + (n−r) log μ⊥` in the restricted case.
    pub fn logdet(&self) -> Result<f64> {
        match self {
            RightFactor::Full { r } => logdet_spd(r),
            RightFactor::Restricted { u, s, mu_perp } => {
                if *mu_perp <= 0.0 {
                    return Err(Error::NotSpd);
                }
                let free = (u.nrows() - u.ncols()) as f64;
                Ok(logdet_spd(s)? + free * mu_perp.ln())
            }
        }
    }
}

/// `Φ_L = E[Gᵀ L⁻¹ G]`.
pub fn whitened_column_moment(model: &SpikedModel, l: &Mat) -> Result<Mat> {
    Ok(model.expected_whitened(Side::Right, &inverse_spd(l)?))
}

/// `½ [n log det L + m log det R̂ + Tr(R̂⁻¹ Φ_L)]`.
///
/// The constant `−½(log det Σ + mn)` is omitted, so values are only
/// comparable within one model.
pub fn kl_objective(l: &Mat, rhat: &RightFactor, model: &SpikedModel) -> Result<f64> {
    let (m, n) = model.dims();
    if l.shape() != (m, m) {
        return Err(Error::Shape {
            context: "left factor",
            expected: (m, m),
            actual: l.shape(),
        });
    }
    if rhat.dim() != n {
        return Err(Error::Shape {
            context: "right factor",
            expected: (n, n),
            actual: (rhat.dim(), rhat.dim()),
        });
    }
    let phi = whitened_column_moment(model, l)?;
    let trace = (rhat.inverse()? * phi).trace();
    Ok(0.5 * (n as f64 * logdet_spd(l)? + m as f64 * rhat.logdet()? + trace))
}
