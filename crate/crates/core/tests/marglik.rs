use facsel_core::linalg::Matrix;
use facsel_core::marglik::{candidate_log_marginal, MarglikConfig, Symmetrization};
use facsel_core::model::{generate_synthetic, implied_covariance, log_likelihood_from_scatter};
use facsel_core::sampler::{ChainConfig, PriorSpec};
use facsel_core::stats::{self, ln_gamma, rng_from_seed, LN_2PI};
use facsel_core::{CellStatus, Dataset, FactorModel, PatternMatrix, TrueModelSpec};

/// Product over items of the inverse-gamma–normal marginal.
fn diagonal_model_log_marginal(data: &Dataset, a: f64, b: f64) -> f64 {
    let n = data.n() as f64;
    let s = data.scatter();
    (0..data.p())
        .map(|i| {
            a * b.ln() - ln_gamma(a) + ln_gamma(a + 0.5 * n) - 0.5 * n * LN_2PI - (a + 0.5 * n) * (b + 0.5 * s[(i, i)]).ln()
        })
        .sum()
}

fn diagonal_data(p: usize, n: usize, seed: u64) -> Dataset {
    let model = FactorModel::orthogonal(Matrix::zeros(p, 0), vec![1.0; p]).unwrap();
    generate_synthetic(&TrueModelSpec::new(model, n, seed).unwrap())
}

#[test]
fn diagonal_model_matches_closed_form() {
    let data = diagonal_data(5, 100, 17);
    let prior = PriorSpec::conjugate(1.0, 2.0, 1.0);
    let config = MarglikConfig::with_chain(ChainConfig { n_iter: 2000, burn_in: 200, ..ChainConfig::default() });
    let est = candidate_log_marginal(&data, &PatternMatrix::all_free(5, 0), &prior, &config).unwrap();
    let exact = diagonal_model_log_marginal(&data, 2.0, 1.0);
    assert!((est.log_marginal - exact).abs() < 1e-9, "{} vs {}", est.log_marginal, exact);
    assert_eq!(est.mc_standard_error, 0.0);
}

fn one_factor_problem() -> (Dataset, PatternMatrix, PriorSpec) {
    let l = Matrix::from_rows(&[[0.8], [0.7], [0.6]]);
    let model = FactorModel::orthogonal(l, vec![0.36, 0.51, 0.64]).unwrap();
    let data = generate_synthetic(&TrueModelSpec::new(model, 40, 99).unwrap());
    let mut pattern = PatternMatrix::all_free(3, 1);
    pattern.set(0, 0, CellStatus::PositiveAnchor);
    (data, pattern, PriorSpec::conjugate(1.0, 2.0, 1.0))
}

/// Plain importance sampling from the prior.
fn prior_importance_estimate(data: &Dataset, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_from_seed(seed);
    let scatter = data.scatter();
    let ll: Vec<f64> = (0..draws)
        .map(|_| {
            let l = Matrix::from_vec(3, 1, (0..3).map(|_| stats::std_normal(&mut rng)).collect());
            let psi: Vec<f64> = (0..3).map(|_| stats::inv_gamma(&mut rng, 2.0, 1.0)).collect();
            let model = FactorModel::orthogonal(l, psi).unwrap();
            log_likelihood_from_scatter(data.n(), &scatter, &implied_covariance(&model)).unwrap()
        })
        .collect();
    let top = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = ll.iter().map(|v| (v - top).exp()).collect();
    let (mean, var) = stats::mean_var(&w);
    (top + mean.ln(), (var / draws as f64).sqrt() / mean)
}

#[test]
fn one_factor_matches_importance_sampling() {
    let (data, pattern, prior) = one_factor_problem();
    let config = MarglikConfig::with_chain(ChainConfig { n_iter: 6000, burn_in: 1000, ..ChainConfig::default() });
    let est = candidate_log_marginal(&data, &pattern, &prior, &config).unwrap();
    let (is, is_se) = prior_importance_estimate(&data, 1_000_000, 5);
    let se = (est.mc_standard_error.powi(2) + is_se.powi(2)).sqrt();
    eprintln!("candidate {:.4} ± {:.4}, importance {:.4} ± {:.4}", est.log_marginal, est.mc_standard_error, is, is_se);
    assert!((est.log_marginal - is).abs() < 3.0 * se.max(0.02), "{} vs {} (se {se})", est.log_marginal, is);
}

#[test]
fn exact_sum_dominates_single_mode() {
    let (data, pattern, prior) = one_factor_problem();
    let config = MarglikConfig::with_chain(ChainConfig { n_iter: 1500, burn_in: 300, ..ChainConfig::default() });
    let est = candidate_log_marginal(&data, &pattern, &prior, &config).unwrap();
    let b = &est.ordinate_breakdown;
    assert!(b.loadings_exact_sum.unwrap() >= b.loadings_single_mode);
    assert_eq!(est.symmetrization, Symmetrization::ExactSum);
}

/// Importance sampling over unrestricted loadings, proposal fitted around the data.
fn two_factor_importance_estimate(data: &Dataset, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_from_seed(seed);
    let scatter = data.scatter();
    let ll: Vec<f64> = (0..draws)
        .map(|_| {
            let l = Matrix::from_vec(4, 2, (0..8).map(|_| stats::std_normal(&mut rng)).collect());
            let psi: Vec<f64> = (0..4).map(|_| stats::inv_gamma(&mut rng, 2.0, 1.0)).collect();
            let model = FactorModel::orthogonal(l, psi).unwrap();
            log_likelihood_from_scatter(data.n(), &scatter, &implied_covariance(&model)).unwrap()
        })
        .collect();
    let top = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = ll.iter().map(|v| (v - top).exp()).collect();
    let (mean, var) = stats::mean_var(&w);
    (top + mean.ln(), (var / draws as f64).sqrt() / mean)
}

#[test]
fn echelon_coordinates_recover_rotation_invariant_marginal() {
    let l = Matrix::from_rows(&[[0.8, 0.0], [0.7, 0.3], [0.1, 0.7], [0.0, 0.6]]);
    let model = FactorModel::orthogonal(l, vec![0.36, 0.42, 0.5, 0.64]).unwrap();
    let data = generate_synthetic(&TrueModelSpec::new(model, 15, 3).unwrap());
    let pattern = PatternMatrix::efa_echelon(4, &[0, 3]).unwrap();
    let prior = PriorSpec::conjugate(1.0, 2.0, 1.0).with_rotation_jacobian();
    let config = MarglikConfig::with_chain(ChainConfig { n_iter: 20000, burn_in: 2000, ..ChainConfig::default() });
    let est = candidate_log_marginal(&data, &pattern, &prior, &config).unwrap();
    let (is, is_se) = two_factor_importance_estimate(&data, 2_000_000, 8);
    let se = (est.mc_standard_error.powi(2) + is_se.powi(2)).sqrt();
    eprintln!("echelon {:.4} ± {:.4}, importance {:.4} ± {:.4}", est.log_marginal, est.mc_standard_error, is, is_se);
    assert!((est.log_marginal - is).abs() < 3.0 * se.max(0.02));
}
