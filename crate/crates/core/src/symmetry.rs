//! Column sign/permutation symmetries of a loading pattern.
//!
//! The likelihood and the (unanchored) priors are invariant under
//! `Λ → ΛPS`, `Φ → SPᵀΦPS` for a permutation `P` and sign matrix `S`. Only the
//! transformations that map the pattern onto itself are symmetries of a given
//! model; they form its stabilizer group.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::model::{CellStatus, FactorModel, PatternMatrix};

/// Column `j` of the image is `signs[j]` times column `perm[j]` of the original.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPermutation {
    pub perm: Vec<usize>,
    pub signs: Vec<f64>,
}

impl SignedPermutation {
    pub fn identity(m: usize) -> Self {
        SignedPermutation { perm: (0..m).collect(), signs: vec![1.0; m] }
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(j, &k)| j == k) && self.signs.iter().all(|&s| s > 0.0)
    }

    pub fn apply_loadings(&self, loadings: &Matrix) -> Matrix {
        let (p, m) = (loadings.rows(), loadings.cols());
        let mut out = Matrix::zeros(p, m);
        for i in 0..p {
            for j in 0..m {
                out[(i, j)] = self.signs[j] * loadings[(i, self.perm[j])];
            }
        }
        out
    }

    pub fn apply_phi(&self, phi: &Matrix) -> Matrix {
        let m = phi.rows();
        let mut out = Matrix::zeros(m, m);
        for j in 0..m {
            for k in 0..m {
                out[(j, k)] = self.signs[j] * self.signs[k] * phi[(self.perm[j], self.perm[k])];
            }
        }
        out
    }

    pub fn apply(&self, model: &FactorModel) -> FactorModel {
        FactorModel {
            loadings: self.apply_loadings(&model.loadings),
            unique_variances: model.unique_variances.clone(),
            factor_correlations: self.apply_phi(&model.factor_correlations),
        }
    }
}

fn same_status(a: CellStatus, b: CellStatus, sign: f64) -> bool {
    match (a, b) {
        (CellStatus::Free | CellStatus::PositiveAnchor, CellStatus::Free | CellStatus::PositiveAnchor) => true,
        (CellStatus::FixedZero, CellStatus::FixedZero) => true,
        (CellStatus::FixedValue(x), CellStatus::FixedValue(y)) => x == sign * y,
        (CellStatus::FixedZero, CellStatus::FixedValue(y)) | (CellStatus::FixedValue(y), CellStatus::FixedZero) => {
            y == 0.0
        }
        _ => false,
    }
}

fn column_matches(pattern: &PatternMatrix, target: usize, source: usize, sign: f64) -> bool {
    (0..pattern.p()).all(|i| same_status(pattern.get(i, target), pattern.get(i, source), sign))
}

/// All signed column permutations mapping the pattern onto itself (anchors count as free).
pub fn stabilizer(pattern: &PatternMatrix) -> Vec<SignedPermutation> {
    let m = pattern.m();
    let mut out = Vec::new();
    let mut current = SignedPermutation::identity(m);
    let mut used = vec![false; m];
    extend(pattern, 0, &mut current, &mut used, &mut out);
    out
}

fn extend(
    pattern: &PatternMatrix,
    j: usize,
    current: &mut SignedPermutation,
    used: &mut [bool],
    out: &mut Vec<SignedPermutation>,
) {
    let m = pattern.m();
    if j == m {
        out.push(current.clone());
        return;
    }
    for source in 0..m {
        if used[source] {
            continue;
        }
        for sign in [1.0, -1.0] {
            if column_matches(pattern, j, source, sign) {
                used[source] = true;
                current.perm[j] = source;
                current.signs[j] = sign;
                extend(pattern, j + 1, current, used, out);
                used[source] = false;
            }
        }
    }
}

/// Natural log of the stabilizer's order.
pub fn ln_stabilizer_order(pattern: &PatternMatrix) -> f64 {
    libm::log(stabilizer(pattern).len() as f64)
}

/// Element of `group` bringing `loadings` closest (Frobenius) to `reference`.
pub fn align<'a>(loadings: &Matrix, reference: &Matrix, group: &'a [SignedPermutation]) -> &'a SignedPermutation {
    let mut best = &group[0];
    let mut best_d = f64::INFINITY;
    for g in group {
        let mut d = 0.0;
        for i in 0..loadings.rows() {
            for j in 0..loadings.cols() {
                let v = g.signs[j] * loadings[(i, g.perm[j])] - reference[(i, j)];
                d += v * v;
            }
        }
        if d < best_d {
            best_d = d;
            best = g;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_free_has_full_group() {
        assert_eq!(stabilizer(&PatternMatrix::all_free(4, 3)).len(), 8 * 6);
    }

    #[test]
    fn echelon_keeps_signs_only() {
        let p = PatternMatrix::efa_echelon(6, &[0, 2, 4]).unwrap();
        let g = stabilizer(&p);
        assert_eq!(g.len(), 8);
        assert!(g.iter().all(|s| s.perm == [0, 1, 2]));
    }

    #[test]
    fn nonzero_fixed_value_blocks_sign_flip() {
        let mut p = PatternMatrix::all_free(3, 1);
        p.set(0, 0, CellStatus::FixedValue(0.5));
        assert_eq!(stabilizer(&p).len(), 1);
    }

    #[test]
    fn images_preserve_covariance() {
        let l = Matrix::from_rows(&[[0.7, 0.1], [0.2, 0.6], [0.5, -0.3]]);
        let phi = Matrix::from_rows(&[[1.0, 0.3], [0.3, 1.0]]);
        let model = FactorModel::new(l, vec![0.4, 0.5, 0.6], phi).unwrap();
        let sigma = crate::model::implied_covariance(&model);
        for g in stabilizer(&PatternMatrix::all_free(3, 2)) {
            let s = crate::model::implied_covariance(&g.apply(&model));
            assert!(s.max_abs_diff(&sigma) < 1e-14);
        }
    }

    #[test]
    fn alignment_undoes_a_signed_swap() {
        let l = Matrix::from_rows(&[[0.7, 0.1], [0.2, 0.6], [0.5, -0.3]]);
        let group = stabilizer(&PatternMatrix::all_free(3, 2));
        let g = SignedPermutation { perm: vec![1, 0], signs: vec![-1.0, 1.0] };
        let moved = g.apply_loadings(&l);
        let back = align(&moved, &l, &group);
        assert!(back.apply_loadings(&moved).max_abs_diff(&l) < 1e-15);
    }
}
