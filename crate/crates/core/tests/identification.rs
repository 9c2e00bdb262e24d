mod support;

use facsel_core::identification::check_ucfm;
use facsel_core::{CellStatus, PatternMatrix};
use support::rotation::{self, admits_nontrivial_rotation};
use support::CASES;

#[test]
fn checker_agrees_with_rotation_search() {
    rotation::checker_agrees_with_rotation_search(CASES).unwrap();
}

#[test]
fn checker_is_row_permutation_equivariant() {
    rotation::checker_is_row_permutation_equivariant(CASES).unwrap();
}

#[test]
fn exchangeable_columns_are_caught_by_both_checker_and_search() {
    use CellStatus::{FixedZero as Z, Free as F, PositiveAnchor as A};
    // both columns share their zero row at the minimal count
    let pattern = PatternMatrix::from_rows(&[vec![A, A], vec![Z, Z], vec![F, F], vec![F, F]]).unwrap();
    assert!(!check_ucfm(&pattern).overall);
    assert!(admits_nontrivial_rotation(&pattern, 7));
}

#[test]
fn two_factor_base_pattern_admits_only_the_identity() {
    use CellStatus::{FixedZero as Z, Free as F, PositiveAnchor as A};
    let pattern =
        PatternMatrix::from_rows(&[vec![F, F], vec![A, Z], vec![F, F], vec![F, F], vec![F, F], vec![Z, A]]).unwrap();
    assert!(check_ucfm(&pattern).overall);
    for seed in 0..20 {
        assert!(!admits_nontrivial_rotation(&pattern, seed));
    }
}

