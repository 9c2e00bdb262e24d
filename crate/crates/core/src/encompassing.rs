//! Encompassing-prior Bayes factors for inequality-constrained loading structures.
//!
//! Every competing model is a region of the unconstrained base model's
//! parameter space. With a prior that is flat on the loadings (uniform on each
//! row's communality ball), the Bayes factor of a constrained model against
//! the unconstrained one is the posterior mass of its region divided by the
//! prior mass of that region. Prior mass is the model's complexity; posterior
//! mass is its fit.
//!
//! Prior masses of all systems are computed from one shared stream of prior
//! draws, so refinements never gain mass and complementary systems add up
//! exactly on the same draws.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::constraints::BoundSystem;
use crate::diagnostics::effective_sample_size;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::PatternMatrix;
use crate::sampler::BallSection;
use crate::sampler::{Chain, PriorKind};
use crate::stats::{self, SimRng};

/// Below this many prior draws a warning is attached to every prior mass.
pub const MIN_PRIOR_DRAWS: usize = 10_000;

const ZERO_PRIOR_FLAG: &str = "prior mass below resolution; increase n_draws";

/// Treatment of the factor correlations when drawing from the prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PhiMode {
    /// Orthogonal factors: each row uniform on the unit ball.
    #[default]
    Identity,
    /// Φ uniform over correlation matrices, rows uniform on `{λ : λᵀΦλ ≤ 1}`.
    FromPrior,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MassEstimate {
    pub proportion: f64,
    pub n_draws: usize,
    /// Binomial standard error; for posterior masses the effective sample size of
    /// the satisfaction indicator replaces `n_draws`.
    pub standard_error: f64,
    pub effective_draws: f64,
    pub flag: Option<String>,
}

impl MassEstimate {
    fn from_indicators(hits: &[bool], effective_draws: f64) -> Self {
        let n = hits.len();
        let count = hits.iter().filter(|&&h| h).count();
        let proportion = if n == 0 { 0.0 } else { count as f64 / n as f64 };
        let standard_error =
            if effective_draws > 0.0 { libm::sqrt(proportion * (1.0 - proportion) / effective_draws) } else { 0.0 };
        MassEstimate { proportion, n_draws: n, standard_error, effective_draws, flag: None }
    }
}

/// Settings of the prior-mass Monte Carlo.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorDrawConfig {
    pub n_draws: usize,
    pub phi_mode: PhiMode,
    pub seed: u64,
}

impl Default for PriorDrawConfig {
    fn default() -> Self {
        PriorDrawConfig { n_draws: 100_000, phi_mode: PhiMode::Identity, seed: 1 }
    }
}

/// Sampler of loading matrices from the encompassing uniform-ball prior, with
/// anchor columns folded to the positive side (a symmetry of the prior, so this
/// is the prior restricted to positive anchors).
pub struct PriorLoadingSampler<'a> {
    pattern: &'a PatternMatrix,
    phi_mode: PhiMode,
    identity_sections: Vec<BallSection>,
}

impl<'a> PriorLoadingSampler<'a> {
    pub fn new(pattern: &'a PatternMatrix, phi_mode: PhiMode) -> Result<Self> {
        let identity = Matrix::identity(pattern.m());
        let identity_sections = (0..pattern.p())
            .map(|i| BallSection::new(pattern.row(i), &identity).ok_or_else(|| outside_ball(i)))
            .collect::<Result<Vec<_>>>()?;
        for j in 0..pattern.m() {
            if pattern.anchor_row(j).is_some() && (0..pattern.p()).any(|i| pattern.get(i, j).fixed_value().is_some_and(|c| c != 0.0)) {
                return Err(Error::InvalidModel(format!(
                    "column {} has an anchor and a nonzero fixed loading",
                    j + 1
                )));
            }
        }
        Ok(PriorLoadingSampler { pattern, phi_mode, identity_sections })
    }

    /// One prior draw of (Λ, Φ).
    pub fn draw(&self, rng: &mut SimRng) -> Result<(Matrix, Matrix)> {
        let (p, m) = (self.pattern.p(), self.pattern.m());
        let phi = match self.phi_mode {
            PhiMode::Identity => Matrix::identity(m),
            PhiMode::FromPrior => stats::uniform_correlation_matrix(rng, m),
        };
        let mut loadings = Matrix::zeros(p, m);
        for i in 0..p {
            let fresh;
            let section = match self.phi_mode {
                PhiMode::Identity => &self.identity_sections[i],
                PhiMode::FromPrior => {
                    fresh = BallSection::new(self.pattern.row(i), &phi).ok_or_else(|| outside_ball(i))?;
                    &fresh
                }
            };
            let x = section.sample(rng);
            for (&j, v) in section.free.iter().zip(&x) {
                loadings[(i, j)] = *v;
            }
            for (j, c) in self.pattern.fixed_in_row(i) {
                loadings[(i, j)] = c;
            }
        }
        let mut phi = phi;
        for j in 0..m {
            if let Some(a) = self.pattern.anchor_row(j) {
                if loadings[(a, j)] < 0.0 {
                    for i in 0..p {
                        loadings[(i, j)] = -loadings[(i, j)];
                    }
                    for k in 0..m {
                        if k != j {
                            phi[(j, k)] = -phi[(j, k)];
                            phi[(k, j)] = -phi[(k, j)];
                        }
                    }
                }
            }
        }
        Ok((loadings, phi))
    }
}

fn outside_ball(i: usize) -> Error {
    Error::InvalidModel(format!("fixed loadings of item {} lie outside the communality ball", i + 1))
}

/// Satisfaction indicators of every system on a shared stream of prior draws.
pub fn prior_indicators(
    bounds: &[&BoundSystem],
    pattern: &PatternMatrix,
    config: &PriorDrawConfig,
) -> Result<Vec<Vec<bool>>> {
    for b in bounds {
        check_pattern(b, pattern)?;
    }
    let sampler = PriorLoadingSampler::new(pattern, config.phi_mode)?;
    let mut rng = stats::rng_from_seed(stats::derive_seed(config.seed, &[0x9A55]));
    let mut hits = vec![Vec::with_capacity(config.n_draws); bounds.len()];
    for _ in 0..config.n_draws {
        let (loadings, _) = sampler.draw(&mut rng)?;
        for (h, b) in hits.iter_mut().zip(bounds) {
            h.push(b.evaluate(&loadings));
        }
    }
    Ok(hits)
}

/// Prior masses of several systems from one shared set of prior draws.
pub fn prior_masses(bounds: &[&BoundSystem], pattern: &PatternMatrix, config: &PriorDrawConfig) -> Result<Vec<MassEstimate>> {
    let hits = prior_indicators(bounds, pattern, config)?;
    Ok(hits.iter().map(|h| prior_estimate(h)).collect())
}

fn prior_estimate(hits: &[bool]) -> MassEstimate {
    let mut est = MassEstimate::from_indicators(hits, hits.len() as f64);
    if est.proportion == 0.0 {
        est.flag = Some(ZERO_PRIOR_FLAG.into());
    } else if hits.len() < MIN_PRIOR_DRAWS {
        est.flag = Some(format!("only {} prior draws; at least {MIN_PRIOR_DRAWS} advised", hits.len()));
    }
    est
}

/// Monte Carlo prior mass of one system under the encompassing prior.
pub fn prior_mass(bound: &BoundSystem, pattern: &PatternMatrix, phi_mode: PhiMode, n_draws: usize, seed: u64) -> Result<MassEstimate> {
    let config = PriorDrawConfig { n_draws, phi_mode, seed };
    Ok(prior_masses(&[bound], pattern, &config)?.remove(0))
}

fn check_pattern(bound: &BoundSystem, pattern: &PatternMatrix) -> Result<()> {
    if &bound.pattern != pattern {
        return Err(Error::ChainMismatch(format!(
            "system '{}' was bound to a different base pattern",
            bound.model_name
        )));
    }
    Ok(())
}

fn check_chains(bound: &BoundSystem, chains: &[Chain]) -> Result<()> {
    if chains.is_empty() || chains.iter().all(|c| c.is_empty()) {
        return Err(Error::ChainMismatch("no posterior draws supplied".into()));
    }
    for c in chains {
        if c.provenance.prior.kind != PriorKind::EncompassingBall {
            return Err(Error::ChainMismatch("posterior masses need a chain run under the encompassing ball prior".into()));
        }
        check_pattern(bound, c.pattern())?;
    }
    Ok(())
}

/// Per-chain satisfaction indicators of a system.
fn posterior_indicators(bound: &BoundSystem, chains: &[Chain]) -> Vec<Vec<bool>> {
    chains.iter().map(|c| c.draws.iter().map(|d| bound.evaluate(&d.loadings)).collect()).collect()
}

fn ess_of(series: &[Vec<f64>]) -> Option<f64> {
    let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
    effective_sample_size(&refs)
}

/// Posterior mass of a system: the fraction of retained draws satisfying it.
pub fn posterior_mass(bound: &BoundSystem, chains: &[Chain]) -> Result<MassEstimate> {
    check_chains(bound, chains)?;
    let hits = posterior_indicators(bound, chains);
    Ok(posterior_estimate(&hits))
}

fn posterior_estimate(hits: &[Vec<bool>]) -> MassEstimate {
    let series: Vec<Vec<f64>> = hits.iter().map(|h| h.iter().map(|&b| b as u8 as f64).collect()).collect();
    let total: usize = hits.iter().map(|h| h.len()).sum();
    let ess = ess_of(&series).unwrap_or(total as f64);
    let flat: Vec<bool> = hits.iter().flatten().copied().collect();
    MassEstimate::from_indicators(&flat, ess)
}

/// Settings of a Type II comparison.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Type2Config {
    pub prior_draws: PriorDrawConfig,
    /// Prior model odds, one per system followed by one for the unconstrained
    /// model; equal odds when absent.
    pub prior_odds: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelRow {
    pub name: String,
    /// Prior mass of the model's region — its complexity.
    pub prior_mass: MassEstimate,
    pub posterior_mass: MassEstimate,
    /// `posterior_mass / prior_mass`; absent when the prior mass is zero.
    pub bf_vs_unconstrained: Option<f64>,
    /// Absent when either mass is zero.
    pub log_bf_vs_unconstrained: Option<f64>,
    /// Delta-method standard error of the log Bayes factor.
    pub log_bf_se: Option<f64>,
    /// Absent for models excluded from the probability table.
    pub posterior_probability: Option<f64>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Type2Report {
    /// One row per constraint system, followed by the unconstrained model.
    pub models: Vec<ModelRow>,
    /// `pairwise_log_bf[a][b] = log BF_{a,b}` over the rows of `models`.
    pub pairwise_log_bf: Vec<Vec<Option<f64>>>,
    pub pairwise_se: Vec<Vec<Option<f64>>>,
    pub prior_odds: Vec<f64>,
    pub phi_mode: PhiMode,
    pub n_prior_draws: usize,
    pub n_posterior_draws: usize,
    pub prior_seed: u64,
}

impl Type2Report {
    /// Row with the largest posterior model probability.
    pub fn best(&self) -> Option<&ModelRow> {
        self.models
            .iter()
            .filter(|r| r.posterior_probability.is_some())
            .max_by(|a, b| a.posterior_probability.partial_cmp(&b.posterior_probability).unwrap_or(core::cmp::Ordering::Equal))
    }
}

/// Name of the unconstrained row in a [`Type2Report`].
pub const UNCONSTRAINED: &str = "unconstrained";

/// Whether `fine` contains every relation of `coarse` (so `fine` ⊆ `coarse` as regions).
fn refines(fine: &BoundSystem, coarse: &BoundSystem) -> bool {
    coarse.mass_relations.iter().all(|r| fine.mass_relations.iter().any(|s| s.same_meaning(r)))
}

/// Variance of the mean of `series` (per chain), accounting for autocorrelation.
fn mean_variance(series: &[Vec<f64>]) -> f64 {
    let flat: Vec<f64> = series.iter().flatten().copied().collect();
    if flat.is_empty() {
        return 0.0;
    }
    let (_, var) = stats::mean_var(&flat);
    if var == 0.0 {
        return 0.0;
    }
    let ess = ess_of(series).unwrap_or(flat.len() as f64).max(1.0);
    var / ess
}

/// Encompassing-prior Bayes factors, pairwise Bayes factors and posterior model
/// probabilities for competing systems, all bound to the chains' base pattern.
pub fn type2_bayes_factors(bounds: &[BoundSystem], chains: &[Chain], config: &Type2Config) -> Result<Type2Report> {
    let unconstrained = BoundSystem {
        model_name: UNCONSTRAINED.into(),
        p: chains.first().map_or(0, |c| c.pattern().p()),
        m: chains.first().map_or(0, |c| c.pattern().m()),
        pattern: chains.first().map(|c| c.pattern().clone()).ok_or_else(|| Error::ChainMismatch("no chains supplied".into()))?,
        mass_relations: Vec::new(),
        structural: Vec::new(),
    };
    let pattern = unconstrained.pattern.clone();
    let all: Vec<&BoundSystem> = bounds.iter().chain(core::iter::once(&unconstrained)).collect();
    for b in &all {
        check_chains(b, chains)?;
    }
    let k = all.len();
    let odds = match &config.prior_odds {
        None => vec![1.0; k],
        Some(o) if o.len() == k && o.iter().all(|v| *v > 0.0 && v.is_finite()) => o.clone(),
        Some(o) => {
            return Err(Error::InvalidConfig(format!(
                "prior odds need {k} positive entries (one per system plus the unconstrained model), got {}",
                o.len()
            )))
        }
    };

    let prior_hits = prior_indicators(&all, &pattern, &config.prior_draws)?;
    let post_hits: Vec<Vec<Vec<bool>>> = all.iter().map(|b| posterior_indicators(b, chains)).collect();
    let prior_est: Vec<MassEstimate> = prior_hits.iter().map(|h| prior_estimate(h)).collect();
    let post_est: Vec<MassEstimate> = post_hits.iter().map(|h| posterior_estimate(h)).collect();

    // monotonicity under refinement holds draw by draw on shared draws
    for a in 0..k {
        for b in 0..k {
            if a != b && refines(all[a], all[b]) {
                let ok = prior_est[a].proportion <= prior_est[b].proportion && post_est[a].proportion <= post_est[b].proportion;
                if !ok {
                    return Err(Error::InvalidModel(format!(
                        "mass monotonicity violated between '{}' and '{}'",
                        all[a].model_name, all[b].model_name
                    )));
                }
            }
        }
    }

    // delta method: log mass ≈ mean of indicator/mass, so a log-BF contrast is the
    // mean of Σ coef·I/mass over posterior draws minus the same over prior draws
    let log_bf_var = |terms: &[(usize, f64)]| -> f64 {
        let post: Vec<Vec<f64>> = (0..chains.len())
            .map(|c| {
                let len = post_hits[0][c].len();
                (0..len)
                    .map(|t| {
                        terms.iter().map(|&(mdl, coef)| if post_hits[mdl][c][t] { coef / post_est[mdl].proportion } else { 0.0 }).sum()
                    })
                    .collect()
            })
            .collect();
        let prior: Vec<f64> = (0..prior_hits[0].len())
            .map(|t| terms.iter().map(|&(mdl, coef)| if prior_hits[mdl][t] { coef / prior_est[mdl].proportion } else { 0.0 }).sum())
            .collect();
        let (_, pv) = stats::mean_var(&prior);
        mean_variance(&post) + if prior.is_empty() { 0.0 } else { pv / prior.len() as f64 }
    };

    let usable: Vec<bool> = (0..k).map(|a| prior_est[a].proportion > 0.0).collect();
    let bf: Vec<Option<f64>> =
        (0..k).map(|a| usable[a].then(|| post_est[a].proportion / prior_est[a].proportion)).collect();
    let weight_total: f64 = (0..k).filter_map(|a| bf[a].map(|v| v * odds[a])).sum();

    let mut models = Vec::with_capacity(k);
    for a in 0..k {
        let both = usable[a] && post_est[a].proportion > 0.0;
        let log_bf = both.then(|| libm::log(post_est[a].proportion) - libm::log(prior_est[a].proportion));
        let se = both.then(|| libm::sqrt(log_bf_var(&[(a, 1.0)])));
        let flag = if !usable[a] {
            Some(format!("{ZERO_PRIOR_FLAG}; excluded from model probabilities"))
        } else if post_est[a].proportion == 0.0 {
            Some("no posterior draw satisfies the system".into())
        } else {
            prior_est[a].flag.clone()
        };
        models.push(ModelRow {
            name: all[a].model_name.clone(),
            prior_mass: prior_est[a].clone(),
            posterior_mass: post_est[a].clone(),
            bf_vs_unconstrained: bf[a],
            log_bf_vs_unconstrained: log_bf,
            log_bf_se: se,
            posterior_probability: bf[a].map(|v| v * odds[a] / weight_total),
            flag,
        });
    }

    let mut pairwise_log_bf = vec![vec![None; k]; k];
    let mut pairwise_se = vec![vec![None; k]; k];
    for a in 0..k {
        // a model compared with itself is always even, whatever its mass
        pairwise_log_bf[a][a] = Some(0.0);
        pairwise_se[a][a] = Some(0.0);
        for b in (0..k).filter(|&b| b != a) {
            if let (Some(la), Some(lb)) = (models[a].log_bf_vs_unconstrained, models[b].log_bf_vs_unconstrained) {
                pairwise_log_bf[a][b] = Some(la - lb);
                pairwise_se[a][b] = Some(libm::sqrt(log_bf_var(&[(a, 1.0), (b, -1.0)])));
            }
        }
    }
    Ok(Type2Report {
        models,
        pairwise_log_bf,
        pairwise_se,
        prior_odds: odds,
        phi_mode: config.prior_draws.phi_mode,
        n_prior_draws: config.prior_draws.n_draws,
        n_posterior_draws: chains.iter().map(|c| c.len()).sum(),
        prior_seed: config.prior_draws.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{bind, parse};
    use crate::model::CellStatus;

    fn bound(text: &str, pattern: &PatternMatrix) -> BoundSystem {
        bind(&parse(text).unwrap(), pattern).unwrap()
    }

    #[test]
    fn half_space_has_half_the_prior_mass() {
        let pattern = PatternMatrix::all_free(1, 2);
        let b = bound("L[1,1] > 0", &pattern);
        let est = prior_mass(&b, &pattern, PhiMode::Identity, 40_000, 3).unwrap();
        assert!((est.proportion - 0.5).abs() < 3.0 * est.standard_error, "{est:?}");
    }

    #[test]
    fn one_dimensional_interval_matches_length_ratio() {
        let pattern = PatternMatrix::new(1, 2, vec![CellStatus::Free, CellStatus::FixedZero]).unwrap();
        let b = bound("L[1,1] < -0.3", &pattern);
        let est = prior_mass(&b, &pattern, PhiMode::Identity, 40_000, 4).unwrap();
        assert!((est.proportion - 0.35).abs() < 3.0 * est.standard_error, "{est:?}");
    }

    #[test]
    fn anchors_fold_to_the_positive_half() {
        let mut pattern = PatternMatrix::all_free(3, 2);
        pattern.set(0, 0, CellStatus::PositiveAnchor);
        pattern.set(1, 1, CellStatus::PositiveAnchor);
        pattern.set(1, 0, CellStatus::FixedZero);
        let sampler = PriorLoadingSampler::new(&pattern, PhiMode::FromPrior).unwrap();
        let mut rng = stats::rng_from_seed(9);
        for _ in 0..2000 {
            let (l, phi) = sampler.draw(&mut rng).unwrap();
            assert!(l[(0, 0)] > 0.0 && l[(1, 1)] > 0.0);
            assert_eq!(l[(1, 0)], 0.0);
            for i in 0..3 {
                assert!(crate::sampler::in_ball(l.row(i), &phi));
            }
        }
    }

    #[test]
    fn empty_system_has_full_mass() {
        let pattern = PatternMatrix::all_free(2, 2);
        let b = bound("model empty", &pattern);
        let est = prior_mass(&b, &pattern, PhiMode::Identity, 1000, 1).unwrap();
        assert_eq!(est.proportion, 1.0);
        assert!(est.flag.as_deref().unwrap().contains("advised"));
    }

    #[test]
    fn impossible_system_is_flagged() {
        let pattern = PatternMatrix::all_free(1, 1);
        let b = bound("L[1,1] > 1.5", &pattern);
        let est = prior_mass(&b, &pattern, PhiMode::Identity, 20_000, 1).unwrap();
        assert_eq!(est.proportion, 0.0);
        assert_eq!(est.flag.as_deref(), Some(ZERO_PRIOR_FLAG));
    }

    #[test]
    fn uniform_correlation_is_uniform_for_two_factors() {
        let mut rng = stats::rng_from_seed(5);
        let draws: Vec<f64> = (0..20_000).map(|_| stats::uniform_correlation_matrix(&mut rng, 2)[(0, 1)]).collect();
        let (mean, var) = stats::mean_var(&draws);
        assert!(mean.abs() < 0.02 && (var - 1.0 / 3.0).abs() < 0.01, "{mean} {var}");
    }
}
