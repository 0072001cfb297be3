//! Element counts of optimizer state against closed-form memory formulas.

use serde::{Deserialize, Serialize};

use crate::baselines::KlShampooState;
use crate::error::{Error, Result};
use crate::state::{orientation, ProState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: String,
    pub counted: usize,
    pub expected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub categories: Vec<CategoryCount>,
}

impl MemoryReport {
    pub fn counted(&self) -> usize {
        self.categories.iter().map(|c| c.counted).sum()
    }

    pub fn expected(&self) -> usize {
        self.categories.iter().map(|c| c.expected).sum()
    }

    /// `Err` for the first mismatching category.
    pub fn check(&self) -> Result<()> {
        match self.categories.iter().find(|c| c.counted != c.expected) {
            Some(c) => Err(Error::Audit {
                category: c.category.clone(),
                counted: c.counted,
                expected: c.expected,
            }),
            None => Ok(()),
        }
    }
}

fn report(rows: Vec<(&str, usize, usize)>) -> MemoryReport {
    MemoryReport {
        categories: rows
            .into_iter()
            .map(|(c, counted, expected)| CategoryCount {
                category: c.to_string(),
                counted,
                expected,
            })
            .collect(),
    }
}

/// Pro-KLShampoo element count for an `m × n` parameter at rank `r`, with
/// `(m', n')` the oriented shape: factors `m'²+r²`, eigenbases `m'²+r²`,
/// eigenvalues `m'+r`, basis `n'r`, scalar `1`, momentum `mn`. Any
/// `r ≤ max(m, n)` is accepted.
pub fn pro_formula(m: usize, n: usize, r: usize) -> usize {
    let (mo, no) = orientation(m, n).oriented_shape(m, n);
    2 * (mo * mo + r * r) + (mo + r) + no * r + 1 + m * n
}

/// KL-Shampoo: factors `m²+n²`, eigenbases `m²+n²`, eigenvalues `m+n`, momentum `mn`.
pub fn klshampoo_formula(m: usize, n: usize) -> usize {
    2 * (m * m + n * n) + (m + n) + m * n
}

pub fn memory_audit_pro(st: &ProState) -> MemoryReport {
    let (m, n) = st.shape;
    let (mo, no) = st.oriented_shape();
    let r = st.rank();
    report(vec![
        ("factors", st.l.len() + st.s.len(), mo * mo + r * r),
        ("eigenbases", st.eig_l.basis.len() + st.eig_s.basis.len(), mo * mo + r * r),
        ("eigenvalues", st.eig_l.values.len() + st.eig_s.values.len(), mo + r),
        ("basis", st.basis.len(), no * r),
        ("scalar", 1, 1),
        ("momentum", st.momentum.len(), m * n),
    ])
}

pub fn memory_audit_klshampoo(st: &KlShampooState) -> MemoryReport {
    let (m, n) = st.shape;
    report(vec![
        ("factors", st.l.len() + st.r.len(), m * m + n * n),
        ("eigenbases", st.eig_l.basis.len() + st.eig_r.basis.len(), m * m + n * n),
        ("eigenvalues", st.eig_l.values.len() + st.eig_r.values.len(), m + n),
        ("momentum", st.momentum.len(), m * n),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::init_klshampoo;
    use crate::linalg::Mat;
    use crate::state::{init_state, Hyper};

    #[test]
    fn worked_counts() {
        let h = Hyper {
            rank: 2,
            ..Hyper::default()
        };
        let g = Mat::from_fn(4, 10, |i, j| ((i * 10 + j) as f64).sin());
        let pro = memory_audit_pro(&init_state(&g, &h).unwrap());
        pro.check().unwrap();
        assert_eq!(pro.counted(), 107);
        assert_eq!(pro_formula(4, 10, 2), 107);
        let kl = memory_audit_klshampoo(&init_klshampoo(4, 10, &h).unwrap());
        kl.check().unwrap();
        assert_eq!(kl.counted(), 286);
        assert_eq!(klshampoo_formula(4, 10), 286);
    }

    #[test]
    fn full_rank_costs_more_than_klshampoo() {
        assert!(pro_formula(4, 10, 10) > klshampoo_formula(4, 10));
    }

    #[test]
    fn left_orientation_uses_oriented_shape() {
        let h = Hyper {
            rank: 3,
            ..Hyper::default()
        };
        let g = Mat::from_fn(9, 5, |i, j| ((i + 2 * j) as f64).cos());
        let rep = memory_audit_pro(&init_state(&g, &h).unwrap());
        rep.check().unwrap();
        assert_eq!(rep.counted(), pro_formula(9, 5, 3));
    }

    #[test]
    fn mismatch_names_category() {
        let mut rep = report(vec![("basis", 3, 4)]);
        assert!(matches!(rep.check(), Err(Error::Audit { .. })));
        rep.categories[0].counted = 4;
        rep.check().unwrap();
    }
}
