//! Brute-force rotation search used to cross-check the identification checker.

use facsel_core::identification::check_ucfm;
use facsel_core::linalg::Matrix;
use facsel_core::stats::rng_from_seed;
use facsel_core::{CellStatus, PatternMatrix};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;

use super::properties::Outcome;

/// Admissible directions for a column of the transform: orthogonal to every
/// row fixed at zero in that column, or a fine circle of directions if those
/// rows leave the direction unconstrained.
pub fn column_directions(loadings: &Matrix, pattern: &PatternMatrix, j: usize) -> Vec<[f64; 2]> {
    let rows: Vec<[f64; 2]> = (0..pattern.p())
        .filter(|&i| pattern.get(i, j) == CellStatus::FixedZero)
        .map(|i| [loadings[(i, 0)], loadings[(i, 1)]])
        .filter(|r| r[0].abs() + r[1].abs() > 0.0)
        .collect();
    match rows.first() {
        None => (0..720).map(|t| (t as f64) * std::f64::consts::PI / 360.0).map(|a| [a.cos(), a.sin()]).collect(),
        Some(r) => {
            let norm = r[0].hypot(r[1]);
            let d = [-r[1] / norm, r[0] / norm];
            if rows.iter().all(|q| (q[0] * d[0] + q[1] * d[1]).abs() < 1e-12) {
                vec![d, [-d[0], -d[1]]]
            } else {
                vec![]
            }
        }
    }
}

/// Brute-force search for a non-identity oblique transform `Λ ↦ ΛA` (with the
/// implied factor correlations rescaled to unit diagonal) that keeps every
/// fixed zero and every anchor sign. Two-factor patterns only.
pub fn admits_nontrivial_rotation(pattern: &PatternMatrix, seed: u64) -> bool {
    assert_eq!(pattern.m(), 2);
    let mut rng = rng_from_seed(seed);
    let p = pattern.p();
    let mut loadings = Matrix::zeros(p, 2);
    for i in 0..p {
        for j in 0..2 {
            let magnitude = rng.random_range(0.2..1.0);
            loadings[(i, j)] = match pattern.get(i, j) {
                CellStatus::FixedZero => 0.0,
                CellStatus::PositiveAnchor => magnitude,
                _ => if rng.random::<bool>() { magnitude } else { -magnitude },
            };
        }
    }
    let rho: f64 = rng.random_range(-0.5..0.5);
    let d1 = column_directions(&loadings, pattern, 0);
    let d2 = column_directions(&loadings, pattern, 1);
    for a1 in &d1 {
        for a2 in &d2 {
            let det = a1[0] * a2[1] - a2[0] * a1[1];
            if det.abs() < 1e-6 {
                continue;
            }
            // A⁻¹ for A = [a1 a2] (columns)
            let inv = [[a2[1] / det, -a2[0] / det], [-a1[1] / det, a1[0] / det]];
            let phi = [[1.0, rho], [rho, 1.0]];
            let new_phi_diag = |r: usize| -> f64 {
                (0..2).map(|a| (0..2).map(|b| inv[r][a] * phi[a][b] * inv[r][b]).sum::<f64>()).sum()
            };
            // scale column j of A by sqrt(Φ*_jj) to restore a unit diagonal
            let s = [new_phi_diag(0).sqrt(), new_phi_diag(1).sqrt()];
            let a = [[a1[0] * s[0], a2[0] * s[1]], [a1[1] * s[0], a2[1] * s[1]]];
            let identity = (a[0][0] - 1.0).abs() < 1e-9 && a[0][1].abs() < 1e-9 && a[1][0].abs() < 1e-9 && (a[1][1] - 1.0).abs() < 1e-9;
            if identity {
                continue;
            }
            let keeps_anchors = (0..2).all(|j| match pattern.anchor_row(j) {
                Some(r) => loadings[(r, 0)] * a[0][j] + loadings[(r, 1)] * a[1][j] > 0.0,
                None => true,
            });
            if keeps_anchors {
                return true;
            }
        }
    }
    false
}

pub fn status_strategy() -> impl Strategy<Value = u8> {
    prop_oneof![4 => Just(0u8), 2 => Just(1u8)]
}

/// Random two-factor pattern of Free / FixedZero cells with optional anchors.
pub fn pattern_strategy() -> impl Strategy<Value = PatternMatrix> {
    (2usize..=6)
        .prop_flat_map(|p| {
            (
                Just(p),
                proptest::collection::vec(status_strategy(), p * 2),
                proptest::option::weighted(0.85, 0..p),
                proptest::option::weighted(0.85, 0..p),
            )
        })
        .prop_map(|(p, codes, a1, a2)| {
            let mut cells: Vec<CellStatus> =
                codes.iter().map(|&c| if c == 0 { CellStatus::Free } else { CellStatus::FixedZero }).collect();
            for (j, a) in [a1, a2].into_iter().enumerate() {
                if let Some(r) = a {
                    cells[r * 2 + j] = CellStatus::PositiveAnchor;
                }
            }
            PatternMatrix::new(p, 2, cells).unwrap()
        })
}

pub fn checker_agrees_with_rotation_search(cases: u32) -> Outcome {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
        .run(&(pattern_strategy(), any::<u64>()), |(pattern, seed)| {
            let report = check_ucfm(&pattern);
            let ambiguous = admits_nontrivial_rotation(&pattern, seed);
            prop_assert_eq!(report.overall, !ambiguous, "pattern {:?}", pattern);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn checker_is_row_permutation_equivariant(cases: u32) -> Outcome {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
        .run(&(pattern_strategy(), 0usize..6), |(pattern, shift)| {
            let p = pattern.p();
            let perm: Vec<usize> = (0..p).map(|i| (i + shift) % p).collect();
            let rows: Vec<Vec<CellStatus>> = (0..p).map(|i| pattern.row(perm[i]).to_vec()).collect();
            let permuted = PatternMatrix::from_rows(&rows).unwrap();
            let (a, b) = (check_ucfm(&pattern), check_ucfm(&permuted));
            prop_assert_eq!(a.overall, b.overall);
            for ((_, ca), (_, cb)) in a.conditions().iter().zip(b.conditions().iter()) {
                prop_assert_eq!(&ca.violating_columns, &cb.violating_columns);
                // row r of the permuted pattern is row perm[r] of the original (1-based in reports)
                let mut mapped: Vec<usize> = cb.violating_rows.iter().map(|&r| perm[r - 1] + 1).collect();
                mapped.sort_unstable();
                prop_assert_eq!(&ca.violating_rows, &mapped);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}
