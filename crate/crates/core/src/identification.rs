//! Rotational identification of an oblique confirmatory pattern.
//!
//! An unrestricted confirmatory model fixes just enough loadings to rule out
//! every oblique transformation `Λ ↦ ΛA`, `Φ ↦ A⁻¹ΦA⁻ᵀ` other than the
//! identity. The pattern-level conditions checked here are:
//!
//! * **C1** scaling — the unit diagonal of Φ fixes factor scales (always true here);
//! * **C2** zero count — every column has at least `m − 1` fixed zeros;
//! * **C3** rank — for column j, the rows fixed at zero in j, restricted to the
//!   other columns, have structural rank `m − 1`; when two columns sit at the
//!   minimal zero count their zero-row sets must differ (otherwise the columns
//!   can be exchanged);
//! * **C4** sign — every column has exactly one positive anchor, removing reflections.
//!
//! Structural rank is the generic rank over the nonzero pattern (free cells and
//! nonzero fixed values), computed by maximum bipartite matching.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::model::{CellStatus, PatternMatrix};

/// Outcome of one identification condition; rows and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionResult {
    pub passed: bool,
    pub violating_columns: Vec<usize>,
    pub violating_rows: Vec<usize>,
    pub messages: Vec<String>,
}

impl ConditionResult {
    fn pass() -> Self {
        ConditionResult { passed: true, violating_columns: Vec::new(), violating_rows: Vec::new(), messages: Vec::new() }
    }

    fn fail_column(&mut self, column: usize, rows: &[usize], message: String) {
        self.passed = false;
        if !self.violating_columns.contains(&(column + 1)) {
            self.violating_columns.push(column + 1);
        }
        for &r in rows {
            if !self.violating_rows.contains(&(r + 1)) {
                self.violating_rows.push(r + 1);
            }
        }
        self.messages.push(message);
    }

    fn finish(mut self) -> Self {
        self.violating_columns.sort_unstable();
        self.violating_rows.sort_unstable();
        self
    }
}

/// Parameter count against the number of distinct covariance moments.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LedermannCheck {
    /// Free loadings + unique variances + factor correlations.
    pub free_parameters: usize,
    /// `p(p+1)/2`.
    pub moments: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IdentificationReport {
    pub p: usize,
    pub m: usize,
    pub c1_scaling: ConditionResult,
    pub c2_zero_count: ConditionResult,
    pub c3_rank: ConditionResult,
    pub c4_sign: ConditionResult,
    /// Conjunction of C1–C4.
    pub overall: bool,
    /// Reported as a warning only; does not enter `overall`.
    pub ledermann: LedermannCheck,
}

impl IdentificationReport {
    pub fn conditions(&self) -> [(&'static str, &ConditionResult); 4] {
        [
            ("C1 scaling", &self.c1_scaling),
            ("C2 zero count", &self.c2_zero_count),
            ("C3 rank", &self.c3_rank),
            ("C4 sign", &self.c4_sign),
        ]
    }
}

/// Whether a cell is generically nonzero.
fn structurally_nonzero(status: CellStatus) -> bool {
    match status {
        CellStatus::Free | CellStatus::PositiveAnchor => true,
        CellStatus::FixedZero => false,
        CellStatus::FixedValue(c) => c != 0.0,
    }
}

/// Structural rank of the bipartite graph `rows × cols` with edges where `edge(r, c)`.
pub fn structural_rank(rows: &[usize], cols: &[usize], edge: impl Fn(usize, usize) -> bool) -> usize {
    // Kuhn's augmenting-path matching; matched[c] = index into `rows`
    let mut matched: Vec<Option<usize>> = vec![None; cols.len()];
    fn augment(
        r: usize,
        rows: &[usize],
        cols: &[usize],
        edge: &dyn Fn(usize, usize) -> bool,
        seen: &mut [bool],
        matched: &mut [Option<usize>],
    ) -> bool {
        for c in 0..cols.len() {
            if seen[c] || !edge(rows[r], cols[c]) {
                continue;
            }
            seen[c] = true;
            if matched[c].is_none() || augment(matched[c].unwrap(), rows, cols, edge, seen, matched) {
                matched[c] = Some(r);
                return true;
            }
        }
        false
    }
    let mut size = 0;
    for r in 0..rows.len() {
        let mut seen = vec![false; cols.len()];
        if augment(r, rows, cols, &edge, &mut seen, &mut matched) {
            size += 1;
        }
    }
    size
}

/// Checks whether a pattern yields a globally rotationally unique oblique solution.
pub fn check_ucfm(pattern: &PatternMatrix) -> IdentificationReport {
    let (p, m) = (pattern.p(), pattern.m());
    let zero_rows: Vec<Vec<usize>> =
        (0..m).map(|j| (0..p).filter(|&i| pattern.get(i, j) == CellStatus::FixedZero).collect()).collect();

    let c1 = ConditionResult::pass();

    let mut c2 = ConditionResult::pass();
    for j in 0..m {
        if zero_rows[j].len() + 1 < m {
            c2.fail_column(
                j,
                &[],
                format!("column {} has {} fixed zeros; at least {} needed", j + 1, zero_rows[j].len(), m - 1),
            );
        }
    }

    let mut c3 = ConditionResult::pass();
    for j in 0..m {
        let others: Vec<usize> = (0..m).filter(|&k| k != j).collect();
        let rank = structural_rank(&zero_rows[j], &others, |i, k| structurally_nonzero(pattern.get(i, k)));
        if rank + 1 < m {
            c3.fail_column(
                j,
                &zero_rows[j],
                format!(
                    "column {}: zero rows have structural rank {} on the other columns; {} needed",
                    j + 1,
                    rank,
                    m - 1
                ),
            );
        }
    }
    if m >= 2 {
        for j in 0..m {
            for k in (j + 1)..m {
                let minimal = zero_rows[j].len() + 1 == m && zero_rows[k].len() + 1 == m;
                if minimal && zero_rows[j] == zero_rows[k] {
                    let msg = format!(
                        "columns {} and {} use the same zero rows at the minimal count and can be exchanged",
                        j + 1,
                        k + 1
                    );
                    c3.fail_column(j, &zero_rows[j], msg.clone());
                    c3.fail_column(k, &zero_rows[k], msg);
                }
            }
        }
    }

    let mut c4 = ConditionResult::pass();
    for j in 0..m {
        if pattern.anchor_row(j).is_none() {
            c4.fail_column(j, &[], format!("column {} has no positive anchor; its sign is not identified", j + 1));
        }
    }

    let free = pattern.n_free() + p + m * m.saturating_sub(1) / 2;
    let moments = p * (p + 1) / 2;
    let ledermann = LedermannCheck {
        free_parameters: free,
        moments,
        warning: (free > moments)
            .then(|| format!("{free} free parameters exceed the {moments} distinct covariance moments")),
    };
    let (c1, c2, c3, c4) = (c1.finish(), c2.finish(), c3.finish(), c4.finish());
    let overall = c1.passed && c2.passed && c3.passed && c4.passed;
    IdentificationReport { p, m, c1_scaling: c1, c2_zero_count: c2, c3_rank: c3, c4_sign: c4, overall, ledermann }
}

#[cfg(test)]
mod tests {
    use super::*;
    use CellStatus::{FixedZero as Z, Free as F, PositiveAnchor as A};

    fn two_factor_pattern() -> PatternMatrix {
        PatternMatrix::from_rows(&[
            vec![F, F],
            vec![A, Z],
            vec![F, F],
            vec![F, F],
            vec![F, F],
            vec![Z, A],
        ])
        .unwrap()
    }

    #[test]
    fn six_item_two_factor_base_pattern_passes() {
        let r = check_ucfm(&two_factor_pattern());
        assert!(r.overall, "{r:?}");
        assert!(r.ledermann.warning.is_none());
    }

    #[test]
    fn all_free_fails_zero_count_on_both_columns() {
        let r = check_ucfm(&PatternMatrix::all_free(5, 2));
        assert!(!r.overall);
        assert_eq!(r.c2_zero_count.violating_columns, vec![1, 2]);
        assert_eq!(r.c4_sign.violating_columns, vec![1, 2]);
    }

    #[test]
    fn shared_zero_row_fails_rank() {
        let pattern = PatternMatrix::from_rows(&[vec![A, F], vec![Z, Z], vec![F, A], vec![F, F]]).unwrap();
        let r = check_ucfm(&pattern);
        assert!(r.c2_zero_count.passed);
        assert!(!r.c3_rank.passed);
        assert_eq!(r.c3_rank.violating_rows, vec![2]);
    }

    #[test]
    fn structural_rank_uses_matching() {
        // rows {0,1} × cols {0,1} with edges (0,0),(0,1),(1,0) has a perfect matching
        let edges = [(0, 0), (0, 1), (1, 0)];
        assert_eq!(structural_rank(&[0, 1], &[0, 1], |r, c| edges.contains(&(r, c))), 2);
        // both rows only reach column 0
        assert_eq!(structural_rank(&[0, 1], &[0, 1], |_, c| c == 0), 1);
    }

    #[test]
    fn three_factor_echelon_passes() {
        let pattern = PatternMatrix::from_rows(&[
            vec![A, Z, Z],
            vec![F, A, Z],
            vec![Z, F, A],
            vec![F, F, F],
            vec![Z, Z, F],
            vec![F, Z, F],
        ])
        .unwrap();
        let r = check_ucfm(&pattern);
        assert!(r.overall, "{r:?}");
    }

    #[test]
    fn ledermann_warning_for_saturated_models() {
        let pattern = PatternMatrix::from_rows(&[vec![A, Z], vec![Z, A], vec![F, F]]).unwrap();
        let r = check_ucfm(&pattern);
        assert!(r.ledermann.warning.is_some());
        assert!(r.overall);
    }
}
