//! Dense linear-algebra primitives with fixed sign conventions.
//!
//! Everything downstream works on [`Mat`] (`nalgebra::DMatrix<f64>`). The
//! factorizations here wrap nalgebra's routines and then normalize their
//! output so that two calls on identical input bits agree bit-for-bit and
//! golden values are portable:
//!
//! * eigenvalues and singular values are sorted descending;
//! * the first non-negligible entry of each eigenvector (and of each right
//!   singular vector) is positive;
//! * the implicit `R` factor of a QR decomposition has a non-negative diagonal.
//!
//! Inside a degenerate eigenvalue cluster only the spanned subspace is
//! meaningful. Tests on such inputs compare projectors, not bases.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Entries below this magnitude are skipped when picking the sign of a unit vector.
const SIGN_EPS: f64 = 1e-12;

/// Symmetric eigendecomposition `A = Q Diag(values) Qᵀ`, values descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    pub basis: Mat,
    pub values: Vector,
}

impl SymEig {
    pub fn reconstruct(&self) -> Mat {
        self.map(|v| v)
    }

    /// Spectral function `Q Diag(f(λ)) Qᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let scaled = scale_columns(&self.basis, &self.values.map(f));
        &scaled * self.basis.transpose()
    }
}

/// Orthonormal factor of a thin QR decomposition. The `R` factor is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinQr {
    pub q: Mat,
}

/// Thin singular value decomposition `A = U Diag(sigma) Vᵀ`, `k = min(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Mat,
    pub sigma: Vector,
    pub v: Mat,
}

impl Svd {
    pub fn reconstruct(&self) -> Mat {
        &scale_columns(&self.u, &self.sigma) * self.v.transpose()
    }
}

fn check_square(a: &Mat) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

/// Relative asymmetry `‖A − Aᵀ‖_F / ‖A‖_F` (zero for the zero matrix).
pub fn asymmetry(a: &Mat) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Flip `v` so that its first non-negligible entry is positive. Returns whether it flipped.
fn fix_sign(mut v: nalgebra::DVectorViewMut<'_, f64>) -> bool {
    if let Some(first) = v.iter().copied().find(|x| x.abs() > SIGN_EPS) {
        if first < 0.0 {
            v.neg_mut();
            return true;
        }
    }
    false
}

/// Permutation that sorts `values` descending (stable on ties).
fn descending_order(values: &Vector) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    order
}

pub fn sym_eig(a: &Mat) -> Result<SymEig> {
    check_square(a)?;
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::Asymmetric { asymmetry: asym });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("sym_eig input"));
    }
    let n = a.nrows();
    let eig = nalgebra::SymmetricEigen::new(symmetrize(a));
    let order = descending_order(&eig.eigenvalues);
    let mut basis = Mat::zeros(n, n);
    let mut values = Vector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        basis.set_column(dst, &eig.eigenvectors.column(src));
        values[dst] = eig.eigenvalues[src];
    }
    for j in 0..n {
        fix_sign(basis.column_mut(j));
    }
    Ok(SymEig { basis, values })
}

/// Householder QR of an `n×r` matrix with the sign of each column chosen so
/// that `diag(R) ≥ 0`. Returns `(Q, diag(R))`.
fn householder_qr(a: &Mat) -> (Mat, Vector) {
    let k = a.nrows().min(a.ncols());
    let qr = nalgebra::linalg::QR::new(a.clone());
    let mut q = qr.q();
    let r = qr.r();
    let mut diag = Vector::zeros(k);
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            diag[j] = -r[(j, j)];
        } else {
            diag[j] = r[(j, j)];
        }
    }
    (q, diag)
}

/// Thin QR with an explicit rank check.
///
/// A column whose residual (the diagonal of `R`) falls below `1e-12` times
/// the largest column norm of `a` is reported as rank deficiency; the caller
/// decides how to fall back.
pub fn thin_qr(a: &Mat) -> Result<ThinQr> {
    if a.ncols() > a.nrows() {
        return Err(Error::Config(format!(
            "thin_qr needs r <= n, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("thin_qr input"));
    }
    let scale = (0..a.ncols())
        .map(|j| a.column(j).norm())
        .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Err(Error::RankDeficient { column: 0, norm: 0.0 });
    }
    let (q, diag) = householder_qr(a);
    if let Some(column) = diag.iter().position(|&d| d <= 1e-12 * scale) {
        return Err(Error::RankDeficient {
            column,
            norm: diag[column],
        });
    }
    Ok(ThinQr { q })
}

/// Orthonormal factor of a QR decomposition without the rank check.
///
/// Used for the periodic eigenbasis refresh, where the product `L·Q_L` may
/// legitimately be singular (e.g. right after initialization from a
/// single low-rank gradient). The result always has orthonormal columns.
pub fn orthonormal_factor(a: &Mat) -> Mat {
    householder_qr(a).0
}

pub fn svd(a: &Mat) -> Svd {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Svd {
            u: Mat::zeros(m, 0),
            sigma: Vector::zeros(0),
            v: Mat::zeros(n, 0),
        };
    }
    let raw = nalgebra::SVD::new(a.clone(), true, true);
    let raw_u = raw.u.expect("left singular vectors requested");
    let raw_vt = raw.v_t.expect("right singular vectors requested");
    let order = descending_order(&raw.singular_values);
    let mut u = Mat::zeros(m, k);
    let mut v = Mat::zeros(n, k);
    let mut sigma = Vector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &raw_u.column(src));
        v.set_column(dst, &raw_vt.row(src).transpose());
        sigma[dst] = raw.singular_values[src].max(0.0);
    }
    for j in 0..k {
        if fix_sign(v.column_mut(j)) {
            u.column_mut(j).neg_mut();
        }
    }
    Svd { u, sigma, v }
}

/// Multiply column `j` of `a` by `s[j]`.
pub fn scale_columns(a: &Mat, s: &Vector) -> Mat {
    let mut out = a.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= s[j];
    }
    out
}

/// Multiply row `i` of `a` by `s[i]`.
pub fn scale_rows(a: &Mat, s: &Vector) -> Mat {
    let mut out = a.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= s[i];
    }
    out
}

/// `Q Diag(d) Qᵀ` for an arbitrary (not necessarily orthogonal) `Q`.
pub fn congruence_diag(q: &Mat, d: &Vector) -> Mat {
    &scale_columns(q, d) * q.transpose()
}

pub fn op_norm(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    svd(a).sigma[0]
}

pub fn nuclear_norm(a: &Mat) -> f64 {
    svd(a).sigma.sum()
}

/// Frobenius inner product `⟨A, B⟩ = Tr(AᵀB)`.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

/// Largest entry of `|QᵀQ − I|`.
pub fn orthogonality_error(q: &Mat) -> f64 {
    let gram = q.transpose() * q;
    let eye = Mat::identity(q.ncols(), q.ncols());
    (gram - eye).amax()
}

/// Cholesky-backed log-determinant of an SPD matrix.
pub fn logdet_spd(a: &Mat) -> Result<f64> {
    let chol = nalgebra::Cholesky::new(symmetrize(a)).ok_or(Error::NotSpd)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn inverse_spd(a: &Mat) -> Result<Mat> {
    let chol = nalgebra::Cholesky::new(symmetrize(a)).ok_or(Error::NotSpd)?;
    Ok(symmetrize(&chol.inverse()))
}

pub fn is_spd(a: &Mat) -> bool {
    a.is_square() && asymmetry(a) <= 1e-10 && nalgebra::Cholesky::new(symmetrize(a)).is_some()
}

/// Fractional power `A^p` of a symmetric PSD matrix via its eigendecomposition.
///
/// Eigenvalues at or below `cutoff · λ_max` are treated as zero (their
/// power is set to zero), which yields the pseudo-inverse branch for `p < 0`.
pub fn sym_pow(a: &Mat, p: f64, cutoff: f64) -> Result<Mat> {
    let eig = sym_eig(&symmetrize(a))?;
    let top = eig.values.iter().copied().fold(0.0_f64, f64::max);
    Ok(eig.map(|v| if v > cutoff * top && v > 0.0 { v.powf(p) } else { 0.0 }))
}

/// Sines of the principal angles between the column spans of two matrices
/// with orthonormal columns, largest first.
pub fn principal_angle_sines(a: &Mat, b: &Mat) -> Vector {
    // ‖(I − BBᵀ)A‖ singular values are the sines of the principal angles.
    let residual = a - b * (b.transpose() * a);
    svd(&residual).sigma
}

/// Orthogonal projector `QQᵀ` onto the span of orthonormal columns.
pub fn projector(q: &Mat) -> Mat {
    q * q.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn identity_eigenvalues() {
        let eig = sym_eig(&Mat::identity(3, 3)).unwrap();
        assert_eq!(eig.values.as_slice(), &[1.0, 1.0, 1.0]);
        assert!(orthogonality_error(&eig.basis) < 1e-12);
    }

    #[test]
    fn diagonal_is_sign_fixed_permutation() {
        let a = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 10.0, 9.0]));
        let eig = sym_eig(&a).unwrap();
        assert_eq!(eig.values.as_slice(), &[10.0, 9.0, 1.0]);
        let expected = Mat::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert!((eig.basis - expected).amax() < 1e-14);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let g = randn(6, 6, 7);
        let a = symmetrize(&(&g + g.transpose()));
        let eig = sym_eig(&a).unwrap();
        let err = (eig.reconstruct() - &a).norm();
        assert!(err <= 1e-9 * op_norm(&a), "err = {err:e}");
        assert!(orthogonality_error(&eig.basis) < 1e-10);
        for w in eig.values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        for j in 0..6 {
            let first = eig.basis.column(j).iter().copied().find(|x| x.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
    }

    #[test]
    fn eig_rejects_bad_input() {
        assert!(matches!(sym_eig(&Mat::zeros(2, 3)), Err(Error::NotSquare { .. })));
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig(&a), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn eig_is_deterministic() {
        let g = randn(8, 8, 3);
        let a = &g * g.transpose();
        assert_eq!(sym_eig(&a).unwrap(), sym_eig(&a).unwrap());
    }

    #[test]
    fn qr_of_identity_columns() {
        let a = Mat::identity(5, 2);
        assert!((thin_qr(&a).unwrap().q - &a).amax() < 1e-15);
        let q = thin_qr(&(&a * 2.0)).unwrap().q;
        assert!((q - &a).amax() < 1e-15);
    }

    #[test]
    fn qr_against_gram_schmidt() {
        let a = randn(10, 3, 11);
        let q = thin_qr(&a).unwrap().q;
        // Classical Gram-Schmidt oracle.
        let mut gs = Mat::zeros(10, 3);
        for j in 0..3 {
            let mut v = a.column(j).into_owned();
            for i in 0..j {
                let qi = gs.column(i).into_owned();
                v -= &qi * qi.dot(&a.column(j));
            }
            gs.set_column(j, &(&v / v.norm()));
        }
        assert!((&q - &gs).amax() < 1e-12);
        let r = q.transpose() * &a;
        for i in 0..3 {
            assert!(r[(i, i)] >= 0.0);
            for j in 0..i {
                assert!(r[(i, j)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn qr_reports_rank_deficiency() {
        let mut a = randn(6, 3, 2);
        let c0 = a.column(0).into_owned();
        a.set_column(2, &(&c0 * 3.0));
        assert!(matches!(thin_qr(&a), Err(Error::RankDeficient { column: 2, .. })));
        assert!(matches!(thin_qr(&Mat::zeros(4, 2)), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn svd_simple_cases() {
        let a = Mat::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]);
        assert_eq!(svd(&a).sigma.as_slice(), &[3.0, 0.0]);
        let q = thin_qr(&randn(5, 5, 4)).unwrap().q;
        let s = svd(&q);
        assert!(s.sigma.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn svd_reconstructs_wide() {
        let a = randn(4, 7, 5);
        let s = svd(&a);
        assert_eq!(s.u.shape(), (4, 4));
        assert_eq!(s.v.shape(), (7, 4));
        assert!((s.reconstruct() - &a).norm() <= 1e-9 * s.sigma[0]);
        assert!(orthogonality_error(&s.u) < 1e-10);
        assert!(orthogonality_error(&s.v) < 1e-10);
    }

    #[test]
    fn principal_angles_vanish_for_rotated_basis() {
        let q = thin_qr(&randn(6, 2, 9)).unwrap().q;
        let rot = Mat::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let sines = principal_angle_sines(&(&q * rot), &q);
        assert!(sines.amax() < 1e-12);
    }

    #[test]
    fn logdet_and_inverse() {
        let a = Mat::from_diagonal(&Vector::from_vec(vec![2.0, 3.0]));
        assert!((logdet_spd(&a).unwrap() - 6.0_f64.ln()).abs() < 1e-14);
        assert!((inverse_spd(&a).unwrap()[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!(logdet_spd(&Mat::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]))).is_err());
    }
}
