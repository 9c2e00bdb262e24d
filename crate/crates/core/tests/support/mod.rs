//! Property suites, run at 10³ cases by the core test targets and by the
//! acceptance target.
#![allow(dead_code)]

pub mod properties;
pub mod rotation;

/// Cases per property.
pub const CASES: u32 = 1000;

/// Every property suite by name.
pub fn all() -> Vec<(&'static str, fn(u32) -> properties::Outcome)> {
    vec![
        ("printing_a_parsed_system_is_idempotent", properties::printing_a_parsed_system_is_idempotent),
        ("every_draw_respects_pattern_and_ball", properties::every_draw_respects_pattern_and_ball),
        ("adding_relations_never_increases_mass", properties::adding_relations_never_increases_mass),
        ("a_system_against_itself_has_zero_log_bayes_factor", properties::a_system_against_itself_has_zero_log_bayes_factor),
        ("exact_sum_never_falls_below_the_single_mode", properties::exact_sum_never_falls_below_the_single_mode),
        ("checker_agrees_with_rotation_search", rotation::checker_agrees_with_rotation_search),
        ("checker_is_row_permutation_equivariant", rotation::checker_is_row_permutation_equivariant),
    ]
}
