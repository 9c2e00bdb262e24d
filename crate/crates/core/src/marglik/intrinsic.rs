//! Intrinsic Bayes factors for improper priors.
//!
//! Under an improper prior each marginal likelihood carries an arbitrary
//! constant. The arithmetic intrinsic Bayes factor multiplies the full-data
//! Bayes factor by the average reverse Bayes factor over small training
//! subsamples, so the constants cancel:
//! `log B₂₁ = log B₂₁(y) + log (1/L) Σₗ B₁₂(y(ℓ))`.

use alloc::vec::Vec;

use rand::Rng;

use super::{candidate_log_marginal, MarglikConfig, MarglikEstimate};
use crate::error::{Error, Result};
use crate::model::{Dataset, PatternMatrix};
use crate::sampler::{ChainConfig, PriorSpec};
use crate::stats::{self, derive_seed};

const TRAIN_ROWS: u64 = 0x7241;
const TRAIN_CHAIN: u64 = 0x7243;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntrinsicConfig {
    pub n_train: usize,
    pub n_subsamples: usize,
    /// Chain settings for each training-subsample fit; the seed is derived per subsample.
    pub training_chain: ChainConfig,
    /// Fraction of failed training fits at which the comparison is abandoned.
    pub max_failure_fraction: f64,
}

impl IntrinsicConfig {
    pub fn new(n_train: usize, training_chain: ChainConfig) -> Self {
        IntrinsicConfig { n_train, n_subsamples: 30, training_chain, max_failure_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntrinsicBf {
    pub log_bf: f64,
    pub mc_standard_error: f64,
    pub full_data_log_bf: f64,
    /// `log (1/L) Σₗ B₁₂(y(ℓ))` over the usable subsamples.
    pub training_correction: f64,
    pub failed_subsamples: usize,
    pub n_subsamples: usize,
}

/// Row sets of the training subsamples (drawn without replacement, ascending).
pub fn training_subsamples(n: usize, n_train: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..count)
        .map(|l| {
            let mut rng = stats::rng_from_seed(derive_seed(seed, &[TRAIN_ROWS, l as u64]));
            let mut idx: Vec<usize> = (0..n).collect();
            for t in 0..n_train.min(n) {
                let r = rng.random_range(t..n);
                idx.swap(t, r);
            }
            let mut rows = idx[..n_train.min(n)].to_vec();
            rows.sort_unstable();
            rows
        })
        .collect()
}

/// Candidate estimates on every training subsample; failures are `None`.
pub fn training_marginals(
    data: &Dataset,
    pattern: &PatternMatrix,
    prior: &PriorSpec,
    config: &IntrinsicConfig,
    marglik: &MarglikConfig,
    seed: u64,
) -> Result<Vec<Option<MarglikEstimate>>> {
    if config.n_train >= data.n() {
        return Err(Error::InvalidConfig("training size must be smaller than the sample size".into()));
    }
    if config.n_train < 2 {
        return Err(Error::InvalidConfig("training samples need at least two observations".into()));
    }
    let subsamples = training_subsamples(data.n(), config.n_train, config.n_subsamples, seed);
    let mut out = Vec::with_capacity(subsamples.len());
    for (l, rows) in subsamples.iter().enumerate() {
        let train = data.select_rows(rows)?;
        let cfg = MarglikConfig {
            chain: ChainConfig { seed: derive_seed(seed, &[TRAIN_CHAIN, l as u64]), ..config.training_chain.clone() },
            ..marglik.clone()
        };
        let est = candidate_log_marginal(&train, pattern, prior, &cfg).ok().filter(|e| e.log_marginal.is_finite());
        out.push(est);
    }
    Ok(out)
}

/// Combines full-data and training estimates of models 1 and 2 into `log B₂₁`.
pub fn combine_intrinsic(
    full1: &MarglikEstimate,
    full2: &MarglikEstimate,
    train1: &[Option<MarglikEstimate>],
    train2: &[Option<MarglikEstimate>],
    max_failure_fraction: f64,
) -> Result<IntrinsicBf> {
    let total = train1.len().min(train2.len());
    let pairs: Vec<(&MarglikEstimate, &MarglikEstimate)> =
        train1.iter().zip(train2).filter_map(|(a, b)| Some((a.as_ref()?, b.as_ref()?))).collect();
    let failed = total - pairs.len();
    if total == 0 || failed as f64 >= max_failure_fraction * total as f64 && failed > 0 {
        return Err(Error::TrainingSizeTooSmall { failed, total });
    }
    let full_data_log_bf = full2.log_marginal - full1.log_marginal;
    // reverse Bayes factors on the training subsamples
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a.log_marginal - b.log_marginal).collect();
    let top = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = d.iter().map(|v| libm::exp(v - top)).collect();
    let sum_w: f64 = w.iter().sum();
    let l = w.len() as f64;
    let training_correction = top + libm::log(sum_w / l);
    // subsample-to-subsample spread of the arithmetic mean, plus per-fit MC error
    let (_, var_w) = stats::mean_var(&w);
    let between = if w.len() > 1 { var_w / l / (sum_w / l).sq() } else { 0.0 };
    let within: f64 = pairs
        .iter()
        .zip(&w)
        .map(|((a, b), wi)| wi * wi * (a.mc_standard_error.sq() + b.mc_standard_error.sq()))
        .sum::<f64>()
        / (sum_w * sum_w);
    let full_var = full1.mc_standard_error.sq() + full2.mc_standard_error.sq();
    Ok(IntrinsicBf {
        log_bf: full_data_log_bf + training_correction,
        mc_standard_error: libm::sqrt(full_var + between + within),
        full_data_log_bf,
        training_correction,
        failed_subsamples: failed,
        n_subsamples: total,
    })
}

/// `log B₂₁` of pattern 2 against pattern 1 under a common improper prior.
pub fn intrinsic_type1_bf(
    data: &Dataset,
    pattern1: &PatternMatrix,
    pattern2: &PatternMatrix,
    prior: &PriorSpec,
    marglik: &MarglikConfig,
    config: &IntrinsicConfig,
) -> Result<IntrinsicBf> {
    let seed = marglik.chain.seed;
    let full1 = candidate_log_marginal(data, pattern1, prior, marglik)?;
    let full2 = candidate_log_marginal(data, pattern2, prior, marglik)?;
    let train1 = training_marginals(data, pattern1, prior, config, marglik, seed)?;
    let train2 = training_marginals(data, pattern2, prior, config, marglik, seed)?;
    combine_intrinsic(&full1, &full2, &train1, &train2, config.max_failure_fraction)
}

trait Square {
    fn sq(self) -> f64;
}

impl Square for f64 {
    fn sq(self) -> f64 {
        self * self
    }
}
