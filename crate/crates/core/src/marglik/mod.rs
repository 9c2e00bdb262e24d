//! Marginal likelihoods of factor models from Gibbs output.
//!
//! The candidate identity `log m(y) = log f(y|θ*) + log π(θ*) − log π(θ*|y)` is
//! evaluated on the collapsed parameter `θ = (Λ, Ψ, Φ)` with the scores integrated
//! out of the likelihood. The posterior ordinate is split into blocks:
//!
//! * `π(Λ*|y)`: Rao–Blackwell average of the loading-row conditionals over the
//!   main run, summed over the images of `Λ*` under the pattern's symmetry group;
//! * `π(Ψ*|Λ*, y)`: average of the inverse-gamma conditionals over a reduced run
//!   with the loadings held at `Λ*`;
//! * `π(Φ*|Λ*, Ψ*, y)`: one reduced run per correlation coordinate, each averaging
//!   the quadrature-normalized coordinate conditional.
//!
//! Densities use the symmetric (unanchored) convention throughout, so the
//! ordinate of the anchored chain is divided by the group order.

mod intrinsic;
mod regularity;
mod select;

use alloc::vec;
use alloc::vec::Vec;

pub use intrinsic::{
    combine_intrinsic, intrinsic_type1_bf, training_marginals, training_subsamples, IntrinsicBf, IntrinsicConfig,
};
pub use regularity::{assess_regularity, RegularityReport, RegularityThresholds};
pub use select::{efa_leaders, efa_pattern, select_dimensionality, select_dimensionality_with, DimensionRecord, DimensionalitySelection, SelectionConfig};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{implied_covariance, log_likelihood_from_scatter, Dataset, FactorModel, PatternMatrix};
use crate::sampler::phi::{correlation_pairs, CorrelationConditional};
use crate::sampler::{
    jacobian_exponent, ln_prior, row_conditional_from_stats, run_chains, run_clamped, Chain, ChainConfig, Clamp,
    PhiPrior, PriorKind, PriorSpec,
};
use crate::stats::{self, derive_seed};
use crate::symmetry::{stabilizer, SignedPermutation};

/// Largest symmetry group whose images are summed explicitly.
const MAX_EXACT_IMAGES: usize = 512;

const PSI_RUN: u64 = 0x5151;
const PHI_RUN: u64 = 0xF1F1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Symmetrization {
    /// Sum of the loading ordinate over every image of `Λ*`.
    ExactSum,
    /// Single-image ordinate; valid when the symmetric modes are well separated.
    AdditiveApprox,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarglikConfig {
    pub chain: ChainConfig,
    /// `None` picks `ExactSum` for m ≤ 4 and `AdditiveApprox` above.
    pub symmetrization: Option<Symmetrization>,
    pub batches: usize,
    /// Draws of each correlation reduced run used for the (quadrature) ordinate.
    pub phi_ordinate_draws: usize,
}

impl Default for MarglikConfig {
    fn default() -> Self {
        MarglikConfig { chain: ChainConfig::default(), symmetrization: None, batches: 20, phi_ordinate_draws: 400 }
    }
}

impl MarglikConfig {
    pub fn with_chain(chain: ChainConfig) -> Self {
        MarglikConfig { chain, ..MarglikConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OrdinateBreakdown {
    pub log_likelihood: f64,
    pub log_prior: f64,
    /// Loading ordinate used in the estimate.
    pub loadings: f64,
    pub loadings_single_mode: f64,
    pub loadings_exact_sum: Option<f64>,
    pub unique_variances: f64,
    pub correlations: Vec<f64>,
    pub ln_group_order: f64,
    pub se_loadings: f64,
    pub se_unique_variances: f64,
    pub se_correlations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarglikEstimate {
    pub log_marginal: f64,
    pub mc_standard_error: f64,
    pub ordinate_breakdown: OrdinateBreakdown,
    pub theta_star: FactorModel,
    pub symmetrization: Symmetrization,
    pub n_draws: usize,
    pub seed: u64,
}

impl MarglikEstimate {
    /// The estimate under the other symmetrization, when it was computed.
    pub fn log_marginal_under(&self, sym: Symmetrization) -> Option<f64> {
        let b = &self.ordinate_breakdown;
        let lambda = match sym {
            Symmetrization::ExactSum => b.loadings_exact_sum?,
            Symmetrization::AdditiveApprox => b.loadings_single_mode,
        };
        Some(self.log_marginal + b.loadings - lambda)
    }
}

/// Log of the mean of `exp(values)` with a batch-means standard error of that log.
pub fn log_mean_exp_batched(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return (top, 0.0);
    }
    let w: Vec<f64> = values.iter().map(|v| libm::exp(v - top)).collect();
    let mean = w.iter().sum::<f64>() / n as f64;
    let b = batches.min(n).max(1);
    let se = if b < 2 {
        0.0
    } else {
        let size = n / b;
        let means: Vec<f64> = (0..b).map(|k| w[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64).collect();
        let (_, var) = stats::mean_var(&means);
        libm::sqrt(var / b as f64) / mean
    };
    (top + libm::log(mean), se)
}

/// Runs the main chains (with score statistics) and evaluates the candidate estimator.
pub fn candidate_log_marginal(
    data: &Dataset,
    pattern: &PatternMatrix,
    prior: &PriorSpec,
    config: &MarglikConfig,
) -> Result<MarglikEstimate> {
    let chain_cfg = ChainConfig { retain_score_stats: true, ..config.chain.clone() };
    let chains = run_chains(data, pattern, prior, &chain_cfg)?;
    candidate_from_chains(data, pattern, prior, &chains, config)
}

/// Candidate estimator from existing main-run chains (which must carry score statistics).
pub fn candidate_from_chains(
    data: &Dataset,
    pattern: &PatternMatrix,
    prior: &PriorSpec,
    chains: &[Chain],
    config: &MarglikConfig,
) -> Result<MarglikEstimate> {
    if prior.kind == PriorKind::EncompassingBall {
        return Err(Error::InvalidConfig(
            "the candidate estimator supports the improper and conjugate priors only".into(),
        ));
    }
    if chains.is_empty() {
        return Err(Error::ChainMismatch("no chains supplied".into()));
    }
    for c in chains {
        if c.pattern() != pattern || c.provenance.prior != *prior {
            return Err(Error::ChainMismatch("chain was run under a different pattern or prior".into()));
        }
        if c.score_stats.is_none() {
            return Err(Error::ChainMismatch("main-run chains must retain score statistics".into()));
        }
    }
    let m = pattern.m();
    let n = data.n();
    let scatter = data.scatter();
    let sym = match config.symmetrization {
        Some(s) => s,
        None if m <= 4 => Symmetrization::ExactSum,
        None => Symmetrization::AdditiveApprox,
    };

    // θ*: highest-kernel retained draw over all chains
    let mut star: Option<(&FactorModel, f64)> = None;
    for c in chains {
        if let Some(i) = c.argmax_kernel() {
            let k = c.log_posterior_kernel[i];
            if star.map_or(true, |(_, b)| k > b) {
                star = Some((&c.draws[i], k));
            }
        }
    }
    let star = star.ok_or_else(|| Error::ChainMismatch("chains hold no retained draws".into()))?.0.clone();
    let log_likelihood = log_likelihood_from_scatter(n, &scatter, &implied_covariance(&star))?;
    let log_prior = ln_prior(&star, pattern, prior);

    let group = stabilizer(pattern);
    let ln_group_order = libm::log(group.len() as f64);
    let (single, exact, se_single, se_exact) = loading_ordinate(pattern, prior, chains, &star, &group, config.batches)?;
    let (loadings, se_loadings) = match sym {
        Symmetrization::ExactSum => (
            exact.ok_or_else(|| {
                Error::InvalidConfig("symmetry group too large for the exact image sum; use AdditiveApprox".into())
            })?,
            se_exact,
        ),
        Symmetrization::AdditiveApprox => (single, se_single),
    };

    let seed = chains[0].provenance.config.seed;
    let reduced_cfg = |tag: u64| ChainConfig {
        n_chains: 1,
        dispersed_starts: false,
        retain_scores: false,
        retain_score_stats: true,
        seed: derive_seed(seed, &[tag]),
        ..config.chain.clone()
    };

    // Ψ block
    let psi_run = run_clamped(
        data,
        pattern,
        prior,
        &reduced_cfg(PSI_RUN),
        0,
        &Clamp { start: Some(star.clone()), fix_loadings: true, ..Clamp::default() },
    )?;
    let (a, b) = prior.psi_hyper();
    let psi_values: Vec<f64> = psi_run
        .score_stats
        .as_ref()
        .expect("requested score statistics")
        .iter()
        .map(|s| {
            (0..pattern.p())
                .map(|i| {
                    let rss = residual_ss(&star.loadings, s, &scatter, i);
                    stats::inv_gamma_ln_pdf(star.unique_variances[i], 0.5 * n as f64 + a, 0.5 * rss + b)
                })
                .sum()
        })
        .collect();
    let (unique_variances, se_unique_variances) = log_mean_exp_batched(&psi_values, config.batches);

    // Φ blocks
    let mut correlations = Vec::new();
    let mut se_correlations = Vec::new();
    if prior.phi_prior == PhiPrior::CorrelationPrior && m >= 2 {
        for (r, &(j, k)) in correlation_pairs(m).iter().enumerate() {
            let run = run_clamped(
                data,
                pattern,
                prior,
                &reduced_cfg(PHI_RUN + r as u64),
                0,
                &Clamp { start: Some(star.clone()), fix_loadings: true, fix_psi: true, phi_fixed_pairs: r },
            )?;
            let all_stats = run.score_stats.as_ref().expect("requested score statistics");
            let step = (run.len() / config.phi_ordinate_draws.max(1)).max(1);
            let values: Vec<f64> = (0..run.len())
                .step_by(step)
                .map(|t| {
                    let cond = CorrelationConditional {
                        phi: &run.draws[t].factor_correlations,
                        j,
                        k,
                        ftf: &all_stats[t].ftf,
                        n,
                        ball: None,
                    };
                    cond.ln_normalized_density(star.factor_correlations[(j, k)])
                })
                .collect();
            let (v, se) = log_mean_exp_batched(&values, config.batches);
            correlations.push(v);
            se_correlations.push(se);
        }
    }

    let ordinate = loadings + unique_variances + correlations.iter().sum::<f64>();
    let log_marginal = log_likelihood + log_prior - ordinate;
    if !log_marginal.is_finite() {
        return Err(Error::DegenerateOrdinate);
    }
    let mc_standard_error = libm::sqrt(
        se_loadings * se_loadings
            + se_unique_variances * se_unique_variances
            + se_correlations.iter().map(|s| s * s).sum::<f64>(),
    );
    Ok(MarglikEstimate {
        log_marginal,
        mc_standard_error,
        ordinate_breakdown: OrdinateBreakdown {
            log_likelihood,
            log_prior,
            loadings,
            loadings_single_mode: single,
            loadings_exact_sum: exact,
            unique_variances,
            correlations,
            ln_group_order,
            se_loadings,
            se_unique_variances,
            se_correlations,
        },
        theta_star: star,
        symmetrization: sym,
        n_draws: chains.iter().map(|c| c.len()).sum(),
        seed,
    })
}

/// `yᵢᵀyᵢ − 2λᵢᵀ(FᵀY)ᵢ + λᵢᵀFᵀFλᵢ` for one item.
fn residual_ss(loadings: &Matrix, s: &crate::sampler::ScoreStats, scatter: &Matrix, i: usize) -> f64 {
    let m = loadings.cols();
    let l = loadings.row(i);
    let mut rss = scatter[(i, i)];
    for j in 0..m {
        rss -= 2.0 * l[j] * s.fty[(j, i)];
        for k in 0..m {
            rss += l[j] * s.ftf[(j, k)] * l[k];
        }
    }
    rss.max(1e-12)
}

/// Returns (single-image ordinate, exact image sum, their standard errors); both already
/// divided by the group order.
fn loading_ordinate(
    pattern: &PatternMatrix,
    prior: &PriorSpec,
    chains: &[Chain],
    star: &FactorModel,
    group: &[SignedPermutation],
    batches: usize,
) -> Result<(f64, Option<f64>, f64, f64)> {
    let (p, m) = (pattern.p(), pattern.m());
    let ln_g = libm::log(group.len() as f64);
    if m == 0 || pattern.n_free() == 0 {
        return Ok((-ln_g, Some(-ln_g), 0.0, 0.0));
    }
    let exact = group.len() <= MAX_EXACT_IMAGES;
    let images: Vec<Matrix> = if exact {
        group.iter().map(|g| g.apply_loadings(&star.loadings)).collect()
    } else {
        vec![star.loadings.clone()]
    };
    let identity = group.iter().position(|g| g.is_identity()).filter(|_| exact).unwrap_or(0);
    let leaders: Vec<Option<(usize, u32)>> = (0..p)
        .map(|i| {
            (0..m)
                .find(|&j| pattern.anchor_row(j) == Some(i) && jacobian_exponent(prior, m, j) > 0)
                .map(|j| (j, jacobian_exponent(prior, m, j)))
        })
        .collect();
    let mut single_vals = Vec::new();
    let mut sum_vals = Vec::new();
    let mut per_image = vec![0.0; images.len()];
    for c in chains {
        let all_stats = c.score_stats.as_ref().expect("checked by caller");
        for (draw, s) in c.draws.iter().zip(all_stats) {
            per_image.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..p {
                let prow = pattern.row(i);
                if !prow.iter().any(|st| st.is_free()) {
                    continue;
                }
                let fty_i: Vec<f64> = (0..m).map(|j| s.fty[(j, i)]).collect();
                let cond = row_conditional_from_stats(
                    i,
                    prow,
                    &s.ftf,
                    &fty_i,
                    draw.unique_variances[i],
                    prior.loading_precision(),
                )?;
                let lead = leaders[i].map(|(col, k)| {
                    let pos = cond.free.iter().position(|&j| j == col).expect("anchor cells are free");
                    let norm = stats::normal_abs_moment(cond.mean[pos], cond.covariance[(pos, pos)], k);
                    (pos, k, libm::log(norm))
                });
                let mut x = vec![0.0; cond.free.len()];
                for (img, acc) in images.iter().zip(per_image.iter_mut()) {
                    for (a, &j) in cond.free.iter().enumerate() {
                        x[a] = img[(i, j)];
                    }
                    let mut v = cond.ln_density(&x);
                    if let Some((pos, k, ln_norm)) = lead {
                        v += k as f64 * libm::log(libm::fabs(x[pos])) - ln_norm;
                    }
                    *acc += v;
                }
            }
            single_vals.push(per_image[identity]);
            if exact {
                sum_vals.push(stats::log_sum_exp(&per_image));
            }
        }
    }
    let (single, se_single) = log_mean_exp_batched(&single_vals, batches);
    let (exact_val, se_exact) = if exact {
        let (v, se) = log_mean_exp_batched(&sum_vals, batches);
        (Some(v - ln_g), se)
    } else {
        (None, se_single)
    };
    if !single.is_finite() || exact_val.map_or(false, |v| !v.is_finite()) {
        return Err(Error::DegenerateOrdinate);
    }
    Ok((single - ln_g, exact_val, se_single, se_exact))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batched_mean_of_constants_is_exact() {
        let (v, se) = log_mean_exp_batched(&[-3.0; 100], 20);
        assert!((v + 3.0).abs() < 1e-12);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn batched_mean_matches_direct_average() {
        let vals: Vec<f64> = (0..200).map(|i| -0.01 * i as f64).collect();
        let direct = libm::log(vals.iter().map(|v| libm::exp(*v)).sum::<f64>() / 200.0);
        let (v, se) = log_mean_exp_batched(&vals, 20);
        assert!((v - direct).abs() < 1e-12);
        assert!(se > 0.0);
    }
}
