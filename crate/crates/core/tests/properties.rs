mod support;

use support::properties as props;
use support::CASES;

fn check(outcome: props::Outcome) {
    if let Err(e) = outcome {
        panic!("{e}");
    }
}

#[test]
fn printing_a_parsed_system_is_idempotent() {
    check(props::printing_a_parsed_system_is_idempotent(CASES));
}

#[test]
fn every_draw_respects_pattern_and_ball() {
    check(props::every_draw_respects_pattern_and_ball(CASES));
}

#[test]
fn adding_relations_never_increases_mass() {
    check(props::adding_relations_never_increases_mass(CASES));
}

#[test]
fn a_system_against_itself_has_zero_log_bayes_factor() {
    check(props::a_system_against_itself_has_zero_log_bayes_factor(CASES));
}

#[test]
fn an_unsatisfiable_system_against_itself_is_zero_on_the_diagonal() {
    let lines = ["L[1,1] ~= 0".to_string(), "L[1,1] < L[1,1]".to_string()];
    props::check_self_comparison(&lines, 0).unwrap();
}

#[test]
fn exact_sum_never_falls_below_the_single_mode() {
    check(props::exact_sum_never_falls_below_the_single_mode(CASES));
}
