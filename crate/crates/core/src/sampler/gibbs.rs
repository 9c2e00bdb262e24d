//! The systematic-scan Gibbs sweep.

use alloc::vec;
use alloc::vec::Vec;

use super::phi::{correlation_pairs, CorrelationConditional};
use super::slice::slice_step;
use super::{
    chain_seed, in_ball, jacobian_exponent, ln_prior, row_conditional_from_stats, BallSection, Chain, ChainConfig,
    PhiPrior, PriorKind, PriorSpec, Provenance, ScoreStats,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::model::{implied_covariance, log_likelihood_from_scatter, Dataset, FactorModel, PatternMatrix};
use crate::stats::{self, SimRng};

/// Rejection attempts for a ball-restricted row before switching to the uniform proposal.
const BALL_REJECTION_LIMIT: usize = 1000;

/// Blocks held fixed in a reduced run.
#[derive(Debug, Clone, Default)]
pub(crate) struct Clamp {
    /// Starting point; required when any block is fixed.
    pub start: Option<FactorModel>,
    pub fix_loadings: bool,
    pub fix_psi: bool,
    /// The first `phi_fixed_pairs` correlation coordinates (in update order) stay at their start values.
    pub phi_fixed_pairs: usize,
}

struct State {
    loadings: Matrix,
    psi: Vec<f64>,
    phi: Matrix,
    ftf: Matrix,
    fty: Matrix,
    scores: Option<Matrix>,
}

impl State {
    fn model(&self) -> FactorModel {
        FactorModel { loadings: self.loadings.clone(), unique_variances: self.psi.clone(), factor_correlations: self.phi.clone() }
    }

    /// Changes the sign of factor `j` everywhere it appears.
    fn flip(&mut self, j: usize) {
        let (p, m) = (self.loadings.rows(), self.loadings.cols());
        for i in 0..p {
            self.loadings[(i, j)] = -self.loadings[(i, j)];
            self.fty[(j, i)] = -self.fty[(j, i)];
        }
        for k in 0..m {
            if k != j {
                self.ftf[(j, k)] = -self.ftf[(j, k)];
                self.ftf[(k, j)] = -self.ftf[(k, j)];
                self.phi[(j, k)] = -self.phi[(j, k)];
                self.phi[(k, j)] = -self.phi[(k, j)];
            }
        }
        if let Some(f) = self.scores.as_mut() {
            for t in 0..f.rows() {
                f[(t, j)] = -f[(t, j)];
            }
        }
    }

    fn fold(&mut self, pattern: &PatternMatrix) {
        for j in 0..pattern.m() {
            if let Some(a) = pattern.anchor_row(j) {
                if self.loadings[(a, j)] < 0.0 {
                    self.flip(j);
                }
            }
        }
    }
}

fn initial_state(
    data: &Dataset,
    pattern: &PatternMatrix,
    prior: &PriorSpec,
    config: &ChainConfig,
    rng: &mut SimRng,
) -> State {
    let (p, m, n) = (pattern.p(), pattern.m(), data.n());
    let scatter_diag = data.scatter().diag();
    let psi: Vec<f64> = scatter_diag.iter().map(|s| (0.5 * s / n as f64).max(1e-3)).collect();
    let phi = Matrix::identity(m);
    let mut loadings = Matrix::zeros(p, m);
    for i in 0..p {
        if prior.kind == PriorKind::EncompassingBall {
            if let Some(sec) = BallSection::new(pattern.row(i), &phi) {
                let x = if config.dispersed_starts { sec.sample(rng) } else { sec.center.clone() };
                for (&j, v) in sec.free.iter().zip(x) {
                    loadings[(i, j)] = v;
                }
            }
        } else {
            for j in 0..m {
                if pattern.get(i, j).is_free() {
                    loadings[(i, j)] = if config.dispersed_starts { stats::std_normal(rng) } else { 0.0 };
                }
            }
        }
    }
    pattern.impose_fixed(&mut loadings);
    for j in 0..m {
        if let Some(a) = pattern.anchor_row(j) {
            let v = loadings[(a, j)];
            if v == 0.0 {
                loadings[(a, j)] = if prior.kind == PriorKind::EncompassingBall { 0.1 } else { 0.5 };
            }
        }
    }
    State { loadings, psi, phi, ftf: Matrix::zeros(m, m), fty: Matrix::zeros(m, p), scores: None }
}

/// Draws all factor scores and accumulates `FᵀF`, `FᵀY`.
fn draw_scores(state: &mut State, y: &Matrix, keep: bool, rng: &mut SimRng) -> Result<()> {
    let (n, p, m) = (y.rows(), y.cols(), state.loadings.cols());
    let model = state.model();
    let prec = super::conditional::score_precision(&model)?;
    let chol = Cholesky::new(&prec)?;
    // W = ΛᵀΨ⁻¹, m × p
    let mut w = Matrix::zeros(m, p);
    for i in 0..p {
        for j in 0..m {
            w[(j, i)] = state.loadings[(i, j)] / state.psi[i];
        }
    }
    let mut ftf = Matrix::zeros(m, m);
    let mut fty = Matrix::zeros(m, p);
    let mut scores = if keep { Some(Matrix::zeros(n, m)) } else { None };
    let mut f = vec![0.0; m];
    for t in 0..n {
        let yt = y.row(t);
        for (j, fj) in f.iter_mut().enumerate() {
            *fj = dot(w.row(j), yt);
        }
        // f = P⁻¹b + L⁻ᵀz
        chol.solve_lower_in_place(&mut f);
        for fj in f.iter_mut() {
            *fj += stats::std_normal(rng);
        }
        chol.solve_upper_in_place(&mut f);
        for a in 0..m {
            for b in 0..=a {
                ftf[(a, b)] += f[a] * f[b];
            }
            let fa = f[a];
            for (acc, &yv) in fty.row_mut(a).iter_mut().zip(yt) {
                *acc += fa * yv;
            }
        }
        if let Some(s) = scores.as_mut() {
            s.row_mut(t).copy_from_slice(&f);
        }
    }
    for a in 0..m {
        for b in 0..a {
            ftf[(b, a)] = ftf[(a, b)];
        }
    }
    state.ftf = ftf;
    state.fty = fty;
    state.scores = scores;
    Ok(())
}

fn draw_loading_row(
    state: &mut State,
    i: usize,
    pattern: &PatternMatrix,
    prior: &PriorSpec,
    rng: &mut SimRng,
    fallbacks: &mut usize,
) -> Result<()> {
    let m = pattern.m();
    let prow = pattern.row(i);
    if !prow.iter().any(|c| c.is_free()) {
        return Ok(());
    }
    let fty_i: Vec<f64> = (0..m).map(|j| state.fty[(j, i)]).collect();
    let cond = row_conditional_from_stats(i, prow, &state.ftf, &fty_i, state.psi[i], prior.loading_precision())?;
    let x: Vec<f64> = if prior.kind == PriorKind::EncompassingBall {
        let mut accepted = None;
        for _ in 0..BALL_REJECTION_LIMIT {
            let x = cond.sample(rng);
            if in_ball(&assemble(state.loadings.row(i), &cond.free, &x), &state.phi) {
                accepted = Some(x);
                break;
            }
        }
        match accepted {
            Some(x) => x,
            None => {
                // independence Metropolis step with a uniform proposal on the ball section
                *fallbacks += 1;
                let sec = BallSection::new(prow, &state.phi).ok_or(Error::DegenerateConditional { row: i })?;
                let current: Vec<f64> = cond.free.iter().map(|&j| state.loadings[(i, j)]).collect();
                let proposal = sec.sample(rng);
                let ln_ratio = cond.ln_density(&proposal) - cond.ln_density(&current);
                let u: f64 = rand::Rng::random(rng);
                if libm::log(u) < ln_ratio {
                    proposal
                } else {
                    current
                }
            }
        }
    } else {
        let leader = (0..m).find(|&j| pattern.anchor_row(j) == Some(i) && jacobian_exponent(prior, m, j) > 0);
        match leader {
            Some(c) => {
                let k = jacobian_exponent(prior, m, c);
                let pos = cond.free.iter().position(|&j| j == c).expect("anchor cells are free");
                let (mu, s2) = (cond.mean[pos], cond.covariance[(pos, pos)]);
                let start = state.loadings[(i, c)];
                let xc = slice_step(rng, start, 0.0, f64::INFINITY, libm::sqrt(s2), |x| {
                    k as f64 * libm::log(x) - 0.5 * (x - mu) * (x - mu) / s2
                });
                let (rest, mean, cov) = cond.given_one(pos, xc);
                let mut x = vec![0.0; cond.free.len()];
                x[pos] = xc;
                if !rest.is_empty() {
                    let chol = Cholesky::new(&cov).map_err(|_| Error::DegenerateConditional { row: i })?;
                    for (&a, v) in rest.iter().zip(stats::mvn_sample(rng, &mean, &chol)) {
                        x[a] = v;
                    }
                }
                x
            }
            None => cond.sample(rng),
        }
    };
    for (&j, v) in cond.free.iter().zip(x) {
        state.loadings[(i, j)] = v;
    }
    Ok(())
}

fn assemble(row: &[f64], free: &[usize], x: &[f64]) -> Vec<f64> {
    let mut out = row.to_vec();
    for (&j, &v) in free.iter().zip(x) {
        out[j] = v;
    }
    out
}

fn draw_psi(state: &mut State, scatter: &Matrix, n: usize, prior: &PriorSpec, rng: &mut SimRng) {
    let (p, m) = (state.loadings.rows(), state.loadings.cols());
    let (a, b) = prior.psi_hyper();
    for i in 0..p {
        let l = state.loadings.row(i);
        let mut rss = scatter[(i, i)];
        for j in 0..m {
            rss -= 2.0 * l[j] * state.fty[(j, i)];
            for k in 0..m {
                rss += l[j] * state.ftf[(j, k)] * l[k];
            }
        }
        let rss = rss.max(1e-12);
        state.psi[i] = stats::inv_gamma(rng, 0.5 * n as f64 + a, 0.5 * rss + b);
    }
}

fn draw_phi(state: &mut State, pattern: &PatternMatrix, prior: &PriorSpec, n: usize, skip: usize, rng: &mut SimRng) {
    let m = pattern.m();
    for &(j, k) in correlation_pairs(m).iter().skip(skip) {
        let ball = (prior.kind == PriorKind::EncompassingBall).then_some((&state.loadings, pattern));
        let rho = {
            let cond = CorrelationConditional { phi: &state.phi, j, k, ftf: &state.ftf, n, ball };
            cond.sample(rng)
        };
        state.phi[(j, k)] = rho;
        state.phi[(k, j)] = rho;
    }
}

/// Runs one chain, optionally holding some blocks fixed.
pub(crate) fn run_clamped(
    data: &Dataset,
    pattern: &PatternMatrix,
    prior: &PriorSpec,
    config: &ChainConfig,
    chain_index: usize,
    clamp: &Clamp,
) -> Result<Chain> {
    let seed = chain_seed(config.seed, chain_index);
    let mut rng = stats::rng_from_seed(seed);
    let (n, m) = (data.n(), pattern.m());
    let y = data.values();
    let scatter = data.scatter();
    let mut state = match &clamp.start {
        Some(start) => State {
            loadings: start.loadings.clone(),
            psi: start.unique_variances.clone(),
            phi: start.factor_correlations.clone(),
            ftf: Matrix::zeros(m, m),
            fty: Matrix::zeros(m, data.p()),
            scores: None,
        },
        None => initial_state(data, pattern, prior, config, &mut rng),
    };
    if !clamp.fix_loadings {
        state.fold(pattern);
    }
    let keep_stats = config.retain_score_stats;
    let mut draws = Vec::with_capacity(config.retained());
    let mut kernels = Vec::with_capacity(config.retained());
    let mut score_draws = config.retain_scores.then(Vec::new);
    let mut stats_draws = keep_stats.then(Vec::new);
    let mut fallbacks = 0;
    let update_phi = prior.phi_prior == PhiPrior::CorrelationPrior && m >= 2;

    for iter in 0..config.n_iter {
        if m > 0 {
            draw_scores(&mut state, y, config.retain_scores, &mut rng)?;
            if !clamp.fix_loadings {
                for i in 0..pattern.p() {
                    draw_loading_row(&mut state, i, pattern, prior, &mut rng, &mut fallbacks)?;
                }
                state.fold(pattern);
            }
        }
        if !clamp.fix_psi {
            draw_psi(&mut state, &scatter, n, prior, &mut rng);
        }
        if update_phi {
            draw_phi(&mut state, pattern, prior, n, clamp.phi_fixed_pairs, &mut rng);
        }
        let model = state.model();
        let kernel = log_likelihood_from_scatter(n, &scatter, &implied_covariance(&model))
            .map(|ll| ll + ln_prior(&model, pattern, prior))
            .unwrap_or(f64::NAN);
        if !kernel.is_finite() || !state.psi.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::DivergentChain { iteration: iter });
        }
        if iter >= config.burn_in && (iter - config.burn_in + 1) % config.thin == 0 {
            draws.push(model);
            kernels.push(kernel);
            if let Some(s) = score_draws.as_mut() {
                s.push(state.scores.clone().unwrap_or_else(|| Matrix::zeros(n, 0)));
            }
            if let Some(s) = stats_draws.as_mut() {
                s.push(ScoreStats { ftf: state.ftf.clone(), fty: state.fty.clone() });
            }
        }
    }
    Ok(Chain {
        draws,
        log_posterior_kernel: kernels,
        factor_score_draws: score_draws,
        score_stats: stats_draws,
        provenance: Provenance {
            prior: *prior,
            pattern: pattern.clone(),
            config: config.clone(),
            chain_index,
            seed,
            n_obs: n,
        },
        ball_fallbacks: fallbacks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_synthetic, CellStatus, TrueModelSpec};

    fn one_factor_data(n: usize, seed: u64) -> Dataset {
        let l = Matrix::from_rows(&[[0.8], [0.7], [0.6], [0.5]]);
        let model = FactorModel::orthogonal(l, vec![0.36, 0.51, 0.64, 0.75]).unwrap();
        generate_synthetic(&TrueModelSpec::new(model, n, seed).unwrap())
    }

    #[test]
    fn flip_keeps_fit_invariant() {
        let data = one_factor_data(50, 3);
        let pattern = PatternMatrix::all_free(4, 1);
        let prior = PriorSpec::improper();
        let config = ChainConfig { n_iter: 1, burn_in: 0, ..ChainConfig::default() };
        let mut rng = stats::rng_from_seed(1);
        let mut st = initial_state(&data, &pattern, &prior, &config, &mut rng);
        draw_scores(&mut st, data.values(), true, &mut rng).unwrap();
        let before = implied_covariance(&st.model());
        let ftf = st.ftf.clone();
        st.flip(0);
        assert!(implied_covariance(&st.model()).max_abs_diff(&before) < 1e-15);
        assert_eq!(st.ftf, ftf);
        let f = st.scores.as_ref().unwrap();
        let recomputed = f.t_matmul(data.values());
        assert!(recomputed.max_abs_diff(&st.fty) < 1e-9);
    }

    #[test]
    fn score_cross_products_match_scores() {
        let data = one_factor_data(40, 4);
        let pattern = PatternMatrix::all_free(4, 1);
        let config = ChainConfig { n_iter: 1, burn_in: 0, ..ChainConfig::default() };
        let mut rng = stats::rng_from_seed(2);
        let mut st = initial_state(&data, &pattern, &PriorSpec::improper(), &config, &mut rng);
        draw_scores(&mut st, data.values(), true, &mut rng).unwrap();
        let f = st.scores.clone().unwrap();
        assert!(f.t_matmul(&f).max_abs_diff(&st.ftf) < 1e-9);
        assert!(f.t_matmul(data.values()).max_abs_diff(&st.fty) < 1e-9);
    }

    #[test]
    fn anchors_are_positive_after_fold() {
        let data = one_factor_data(200, 5);
        let mut pattern = PatternMatrix::all_free(4, 1);
        pattern.set(0, 0, CellStatus::PositiveAnchor);
        let config = ChainConfig { n_iter: 300, burn_in: 50, n_chains: 1, ..ChainConfig::default() };
        let chain = super::super::run_chain(&data, &pattern, &PriorSpec::improper(), &config).unwrap();
        assert_eq!(chain.len(), 250);
        assert!(chain.draws.iter().all(|d| d.loadings[(0, 0)] > 0.0));
    }
}
