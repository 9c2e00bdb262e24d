//! Property checks shared by the core test suites and the acceptance run.

use std::sync::OnceLock;

use facsel_core::constraints::{bind, parse, print, BoundSystem};
use facsel_core::encompassing::{posterior_mass, prior_masses, type2_bayes_factors, PriorDrawConfig, Type2Config};
use facsel_core::linalg::Matrix;
use facsel_core::marglik::{candidate_log_marginal, MarglikConfig, Symmetrization};
use facsel_core::model::{generate_synthetic, standardize};
use facsel_core::sampler::{in_ball, run_chains, Chain, ChainConfig, PhiPrior, PriorKind, PriorSpec};
use facsel_core::{CellStatus, Dataset, FactorModel, PatternMatrix, TrueModelSpec};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const P: usize = 4;
const M: usize = 2;

pub fn term_strategy() -> impl Strategy<Value = String> {
    (1..=P, 1..=M, 0u8..4).prop_map(|(i, j, shape)| match shape {
        0 => format!("L[{i},{j}]"),
        1 => format!("-L[{i},{j}]"),
        2 => format!("|L[{i},{j}]|"),
        _ => format!("-|L[{i},{j}]|"),
    })
}

pub fn literal_strategy() -> impl Strategy<Value = String> {
    (-9i32..=9).prop_map(|k| format!("{}", k as f64 / 10.0))
}

/// One relation line: cell terms against cells or literals, strict or approximate.
pub fn relation_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        (term_strategy(), prop::bool::ANY, term_strategy())
            .prop_map(|(a, gt, b)| format!("{a} {} {b}", if gt { ">" } else { "<" })),
        (term_strategy(), prop::bool::ANY, literal_strategy())
            .prop_map(|(a, gt, b)| format!("{a} {} {b}", if gt { ">" } else { "<" })),
        (literal_strategy(), prop::bool::ANY, term_strategy())
            .prop_map(|(a, gt, b)| format!("{a} {} {b}", if gt { ">" } else { "<" })),
        (term_strategy(), 1u8..=5, literal_strategy()).prop_map(|(a, d, b)| format!("{a} ~=({}) {b}", d as f64 / 10.0)),
        term_strategy().prop_map(|a| format!("{a} ~= 0")),
    ]
}

pub fn system_text(lines: &[String]) -> String {
    let mut text = String::from("model generated\n# random system\n");
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    text
}

pub fn base_pattern() -> PatternMatrix {
    let mut pattern = PatternMatrix::all_free(P, M);
    pattern.set(0, 0, CellStatus::PositiveAnchor);
    pattern.set(0, 1, CellStatus::FixedZero);
    pattern.set(3, 0, CellStatus::FixedZero);
    pattern.set(3, 1, CellStatus::PositiveAnchor);
    pattern
}

pub fn two_factor_data(seed: u64) -> Dataset {
    let l = Matrix::from_rows(&[[0.7, 0.0], [0.5, 0.4], [0.3, 0.5], [0.0, 0.7]]);
    let psi = (0..P).map(|i| 1.0 - l.row(i).iter().map(|v| v * v).sum::<f64>()).collect();
    standardize(&generate_synthetic(&TrueModelSpec::new(FactorModel::orthogonal(l, psi).unwrap(), 120, seed).unwrap()))
        .unwrap()
}

pub fn shared_chains() -> &'static [Chain] {
    static CHAINS: OnceLock<Vec<Chain>> = OnceLock::new();
    CHAINS.get_or_init(|| {
        let config = ChainConfig { n_iter: 2000, burn_in: 200, seed: 31, ..ChainConfig::default() };
        run_chains(&two_factor_data(30), &base_pattern(), &PriorSpec::encompassing(PhiPrior::FixedIdentity), &config)
            .unwrap()
    })
}

pub fn try_bind(lines: &[String]) -> Option<BoundSystem> {
    bind(&parse(&system_text(lines)).ok()?, &base_pattern()).ok()
}

/// Random pattern with free, zero, fixed-value and anchor cells; a column never
/// combines an anchor with a nonzero fixed value.
pub fn sampler_pattern_strategy() -> impl Strategy<Value = PatternMatrix> {
    (2usize..=5, 1usize..=2)
        .prop_flat_map(|(p, m)| {
            (
                Just(p),
                Just(m),
                proptest::collection::vec(prop_oneof![5 => Just(0u8), 2 => Just(1u8), 1 => Just(2u8)], p * m),
                proptest::collection::vec(proptest::option::weighted(0.8, 0..p), m),
            )
        })
        .prop_map(|(p, m, codes, anchors)| {
            let mut cells: Vec<CellStatus> = codes
                .iter()
                .map(|&c| match c {
                    0 => CellStatus::Free,
                    1 => CellStatus::FixedZero,
                    _ => CellStatus::FixedValue(0.3),
                })
                .collect();
            for (j, a) in anchors.into_iter().enumerate() {
                if let Some(r) = a {
                    for i in 0..p {
                        if matches!(cells[i * m + j], CellStatus::FixedValue(_)) {
                            cells[i * m + j] = CellStatus::Free;
                        }
                    }
                    cells[r * m + j] = CellStatus::PositiveAnchor;
                }
            }
            PatternMatrix::new(p, m, cells).unwrap()
        })
}

pub fn prior_strategy() -> impl Strategy<Value = PriorSpec> {
    prop_oneof![
        Just(PriorSpec::encompassing(PhiPrior::FixedIdentity)),
        Just(PriorSpec::encompassing(PhiPrior::CorrelationPrior)),
        Just(PriorSpec::conjugate(1.0, 2.0, 1.0)),
        Just(PriorSpec::conjugate(1.0, 2.0, 1.0).with_phi(PhiPrior::CorrelationPrior)),
    ]
}

pub fn noise_data(p: usize, seed: u64) -> Dataset {
    let model = FactorModel::orthogonal(Matrix::zeros(p, 0), vec![1.0; p]).unwrap();
    standardize(&generate_synthetic(&TrueModelSpec::new(model, 25, seed).unwrap())).unwrap()
}


/// Outcome of one property: `Err` carries the minimal failing input and the reason.
pub type Outcome = Result<(), String>;

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Outcome
where
    S::Value: std::fmt::Debug,
{
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

pub fn printing_a_parsed_system_is_idempotent(cases: u32) -> Outcome {
    run(cases, proptest::collection::vec(relation_strategy(), 0..6), |lines| {
        let text = system_text(&lines);
        if let Ok(first) = parse(&text) {
            let printed = print(&first);
            let second = parse(&printed).unwrap();
            prop_assert!(first.same_meaning(&second), "{text}\n---\n{printed}");
            prop_assert_eq!(print(&second), printed);
        }
        Ok(())
    })
}

pub fn every_draw_respects_pattern_and_ball(cases: u32) -> Outcome {
    run(cases, (sampler_pattern_strategy(), prior_strategy(), any::<u64>()), |(pattern, prior, seed)| {
        let data = noise_data(pattern.p(), seed);
        let config = ChainConfig { n_iter: 25, burn_in: 5, seed, ..ChainConfig::default() };
        let chains = run_chains(&data, &pattern, &prior, &config).unwrap();
        let ball = prior.kind == PriorKind::EncompassingBall;
        for draw in chains.iter().flat_map(|c| &c.draws) {
            for i in 0..pattern.p() {
                for j in 0..pattern.m() {
                    let v = draw.loadings[(i, j)];
                    match pattern.get(i, j) {
                        CellStatus::FixedZero => prop_assert_eq!(v, 0.0),
                        CellStatus::FixedValue(c) => prop_assert_eq!(v, c),
                        CellStatus::PositiveAnchor => prop_assert!(v > 0.0),
                        CellStatus::Free => prop_assert!(v.is_finite()),
                    }
                }
                if ball {
                    prop_assert!(in_ball(draw.loadings.row(i), &draw.factor_correlations), "row {i} of {draw:?}");
                }
            }
            prop_assert!(draw.unique_variances.iter().all(|&v| v > 0.0));
        }
        Ok(())
    })
}

pub fn adding_relations_never_increases_mass(cases: u32) -> Outcome {
    let strategy = (proptest::collection::vec(relation_strategy(), 0..3), relation_strategy(), any::<u64>());
    run(cases, strategy, |(base, extra, seed)| check_refinement(&base, extra, seed))
}

pub fn check_refinement(base: &[String], extra: String, seed: u64) -> Result<(), TestCaseError> {
    let mut refined_lines = base.to_vec();
    refined_lines.push(extra);
    let (Some(coarse), Some(refined)) = (try_bind(base), try_bind(&refined_lines)) else {
        return Ok(());
    };
    let cfg = PriorDrawConfig { n_draws: 2000, seed, ..PriorDrawConfig::default() };
    let prior = prior_masses(&[&coarse, &refined], &base_pattern(), &cfg).unwrap();
    prop_assert!(prior[1].proportion <= prior[0].proportion);
    let chains = shared_chains();
    let (a, b) = (posterior_mass(&coarse, chains).unwrap(), posterior_mass(&refined, chains).unwrap());
    prop_assert!(b.proportion <= a.proportion);
    Ok(())
}

pub fn a_system_against_itself_has_zero_log_bayes_factor(cases: u32) -> Outcome {
    run(cases, (proptest::collection::vec(relation_strategy(), 0..4), any::<u64>()), |(lines, seed)| {
        check_self_comparison(&lines, seed)
    })
}

pub fn check_self_comparison(lines: &[String], seed: u64) -> Result<(), TestCaseError> {
    let Some(system) = try_bind(lines) else { return Ok(()) };
    let config = Type2Config {
        prior_draws: PriorDrawConfig { n_draws: 2000, seed, ..PriorDrawConfig::default() },
        prior_odds: None,
    };
    let report = type2_bayes_factors(&[system.clone(), system], shared_chains(), &config).unwrap();
    prop_assert_eq!(&report.models[0], &report.models[1]);
    if report.models[0].log_bf_vs_unconstrained.is_some() {
        prop_assert_eq!(report.pairwise_log_bf[0][1], Some(0.0));
        prop_assert_eq!(report.pairwise_log_bf[1][0], Some(0.0));
    }
    prop_assert_eq!(report.pairwise_log_bf[0][0], Some(0.0));
    Ok(())
}

pub fn exact_sum_never_falls_below_the_single_mode(cases: u32) -> Outcome {
    run(cases, (3usize..=5, 1usize..=2, any::<u64>()), |(p, m, seed)| {
        let leaders: Vec<usize> = (0..m).map(|j| j * (p - 1)).collect();
        let pattern = PatternMatrix::efa_echelon(p, &leaders).unwrap();
        let prior = PriorSpec::conjugate(1.0, 2.0, 1.0).with_rotation_jacobian();
        let config = MarglikConfig {
            chain: ChainConfig { n_iter: 120, burn_in: 20, seed, ..ChainConfig::default() },
            symmetrization: Some(Symmetrization::ExactSum),
            batches: 5,
            phi_ordinate_draws: 40,
        };
        let est = candidate_log_marginal(&noise_data(p, seed), &pattern, &prior, &config).unwrap();
        let b = &est.ordinate_breakdown;
        prop_assert!(b.loadings_exact_sum.unwrap() >= b.loadings_single_mode, "{b:?}");
        Ok(())
    })
}
