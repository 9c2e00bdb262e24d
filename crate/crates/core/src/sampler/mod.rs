//! Gibbs sampling for the score-augmented factor model.
//!
//! One systematic scan updates the factor scores, the free loading cells row
//! by row, the unique variances and (for oblique models) each factor
//! correlation in turn. Positive anchors are enforced by relabeling: when an
//! anchor cell comes out negative its whole column, the matching score column
//! and the matching row/column of `Φ` change sign, which leaves the posterior
//! unchanged.

mod conditional;
mod gibbs;
pub(crate) mod phi;
pub(crate) mod slice;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use conditional::{
    factor_score_conditional, in_ball, loading_row_conditional, BallSection, RowConditional, ScoreConditional,
};
pub(crate) use conditional::row_conditional_from_stats;
pub(crate) use gibbs::{run_clamped, Clamp};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{CellStatus, Dataset, FactorModel, PatternMatrix};
use crate::stats;

/// Shape and rate of the inverse-gamma prior on each unique variance under the uniform-ball prior.
pub const BALL_PSI_SHAPE: f64 = 1.0;
pub const BALL_PSI_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PriorKind {
    /// Flat on the loadings, `1/ψ` on each unique variance.
    ImproperDefault,
    /// `N(0, v)` on each free loading, inverse-gamma(shape, rate) on each unique variance.
    ConjugateVague { loading_prior_variance: f64, ig_shape: f64, ig_rate: f64 },
    /// Uniform on each row's communality ball `λᵀΦλ ≤ 1`; inverse-gamma(1, 0.5) on unique variances.
    EncompassingBall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PhiPrior {
    FixedIdentity,
    /// Uniform over correlation matrices.
    CorrelationPrior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub phi_prior: PhiPrior,
    /// Loadings are stored in echelon coordinates of an orthogonal model and the
    /// prior carries the Jacobian of the map back to unrestricted loadings,
    /// `∏ⱼ |λ_{aⱼ j}|^{m−1−j}` over the anchor cells plus the volume of O(m). The
    /// induced prior on unrestricted loadings is then rotation invariant.
    pub rotation_jacobian: bool,
}

impl PriorSpec {
    pub fn improper() -> Self {
        PriorSpec { kind: PriorKind::ImproperDefault, phi_prior: PhiPrior::FixedIdentity, rotation_jacobian: false }
    }

    pub fn conjugate(loading_prior_variance: f64, ig_shape: f64, ig_rate: f64) -> Self {
        PriorSpec {
            kind: PriorKind::ConjugateVague { loading_prior_variance, ig_shape, ig_rate },
            phi_prior: PhiPrior::FixedIdentity,
            rotation_jacobian: false,
        }
    }

    pub fn encompassing(phi_prior: PhiPrior) -> Self {
        PriorSpec { kind: PriorKind::EncompassingBall, phi_prior, rotation_jacobian: false }
    }

    pub fn with_phi(mut self, phi_prior: PhiPrior) -> Self {
        self.phi_prior = phi_prior;
        self
    }

    pub fn with_rotation_jacobian(mut self) -> Self {
        self.rotation_jacobian = true;
        self
    }

    pub fn is_proper(&self) -> bool {
        !matches!(self.kind, PriorKind::ImproperDefault)
    }

    pub fn validate(&self) -> Result<()> {
        if let PriorKind::ConjugateVague { loading_prior_variance, ig_shape, ig_rate } = self.kind {
            if !(loading_prior_variance > 0.0 && ig_shape > 0.0 && ig_rate > 0.0) {
                return Err(Error::InvalidConfig("conjugate prior hyperparameters must be positive".into()));
            }
        }
        if self.rotation_jacobian && self.phi_prior != PhiPrior::FixedIdentity {
            return Err(Error::InvalidConfig("the rotation Jacobian applies to orthogonal models only".into()));
        }
        if self.rotation_jacobian && self.kind == PriorKind::EncompassingBall {
            return Err(Error::InvalidConfig("the rotation Jacobian is not defined for the uniform-ball prior".into()));
        }
        Ok(())
    }

    /// `(shape, rate)` of the unique-variance prior; `(0, 0)` encodes `1/ψ`.
    pub fn psi_hyper(&self) -> (f64, f64) {
        match self.kind {
            PriorKind::ImproperDefault => (0.0, 0.0),
            PriorKind::ConjugateVague { ig_shape, ig_rate, .. } => (ig_shape, ig_rate),
            PriorKind::EncompassingBall => (BALL_PSI_SHAPE, BALL_PSI_RATE),
        }
    }

    /// Diagonal prior precision on free loadings (zero when flat).
    pub fn loading_precision(&self) -> f64 {
        match self.kind {
            PriorKind::ConjugateVague { loading_prior_variance, .. } => 1.0 / loading_prior_variance,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub dispersed_starts: bool,
    /// Keep the full `n × m` factor scores of every retained draw.
    pub retain_scores: bool,
    /// Keep the score cross-products `FᵀF`, `FᵀY` of every retained draw (enough for
    /// every ordinate the candidate estimator needs).
    pub retain_score_stats: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iter: 6000,
            burn_in: 1000,
            thin: 1,
            seed: 1,
            n_chains: 2,
            dispersed_starts: true,
            retain_scores: false,
            retain_score_stats: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.thin == 0 || self.n_chains == 0 {
            return Err(Error::InvalidConfig("n_iter, thin and n_chains must be positive".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::InvalidConfig(format!(
                "burn_in ({}) must be smaller than n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        Ok(())
    }

    /// Number of retained draws per chain.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    /// Warning text when the retained sample is too small for mass estimation.
    pub fn mass_estimation_warning(&self) -> Option<String> {
        (self.retained() < 1000).then(|| {
            format!("only {} retained draws per chain; at least 1000 are advised for mass estimation", self.retained())
        })
    }
}

/// Score cross-products of one retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreStats {
    /// `FᵀF`, m × m.
    pub ftf: Matrix,
    /// `FᵀY`, m × p.
    pub fty: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub prior: PriorSpec,
    pub pattern: PatternMatrix,
    pub config: ChainConfig,
    pub chain_index: usize,
    pub seed: u64,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<FactorModel>,
    pub log_posterior_kernel: Vec<f64>,
    pub factor_score_draws: Option<Vec<Matrix>>,
    pub score_stats: Option<Vec<ScoreStats>>,
    pub provenance: Provenance,
    /// How often a ball-restricted loading row needed the uniform-proposal fallback.
    pub ball_fallbacks: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn pattern(&self) -> &PatternMatrix {
        &self.provenance.pattern
    }

    /// Index of the retained draw with the largest log kernel.
    pub fn argmax_kernel(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &k) in self.log_posterior_kernel.iter().enumerate() {
            if best.map_or(true, |(_, b)| k > b) {
                best = Some((i, k));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Trace of one loading cell.
    pub fn loading_trace(&self, i: usize, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.loadings[(i, j)]).collect()
    }
}

/// Seed of chain `index` under a base seed.
pub fn chain_seed(base: u64, index: usize) -> u64 {
    stats::derive_seed(base, &[0xC4A1, index as u64])
}

/// Log prior density (up to nothing: constants included) of a parameter point.
pub fn ln_prior(model: &FactorModel, pattern: &PatternMatrix, prior: &PriorSpec) -> f64 {
    let (p, m) = (model.p(), model.m());
    let mut acc = 0.0;
    match prior.kind {
        PriorKind::ImproperDefault => {}
        PriorKind::ConjugateVague { loading_prior_variance, .. } => {
            for i in 0..p {
                for j in 0..m {
                    if pattern.get(i, j).is_free() {
                        acc += stats::normal_ln_pdf(model.loadings[(i, j)], 0.0, loading_prior_variance);
                    }
                }
            }
        }
        PriorKind::EncompassingBall => {
            for i in 0..p {
                if !in_ball(model.loadings.row(i), &model.factor_correlations) {
                    return f64::NEG_INFINITY;
                }
                match BallSection::new(pattern.row(i), &model.factor_correlations) {
                    Some(sec) => acc -= sec.ln_volume(),
                    None => return f64::NEG_INFINITY,
                }
            }
        }
    }
    if prior.rotation_jacobian {
        acc += rotation_jacobian_ln(model, pattern, prior);
    }
    let (a, b) = prior.psi_hyper();
    for &psi in &model.unique_variances {
        acc += if a == 0.0 { -libm::log(psi) } else { stats::inv_gamma_ln_pdf(psi, a, b) };
    }
    if prior.phi_prior == PhiPrior::CorrelationPrior {
        acc -= stats::ln_correlation_volume(m);
    }
    acc
}

/// Jacobian terms of the echelon parameterization (see [`PriorSpec::rotation_jacobian`]).
fn rotation_jacobian_ln(model: &FactorModel, pattern: &PatternMatrix, prior: &PriorSpec) -> f64 {
    let m = model.m();
    let mut acc = stats::ln_orthogonal_group_volume(m) - m as f64 * core::f64::consts::LN_2;
    for j in 0..m {
        if let Some(a) = pattern.anchor_row(j) {
            acc += (m - 1 - j) as f64 * libm::log(libm::fabs(model.loadings[(a, j)]));
        }
    }
    if let PriorKind::ConjugateVague { loading_prior_variance, .. } = prior.kind {
        let zeros = pattern.cells().iter().filter(|c| **c == CellStatus::FixedZero).count();
        acc += zeros as f64 * stats::normal_ln_pdf(0.0, 0.0, loading_prior_variance);
    }
    acc
}

/// Exponent of the rotation Jacobian on the anchor of column `j` (zero when inactive).
pub(crate) fn jacobian_exponent(prior: &PriorSpec, m: usize, j: usize) -> u32 {
    if prior.rotation_jacobian {
        (m - 1 - j) as u32
    } else {
        0
    }
}

fn check_inputs(data: &Dataset, pattern: &PatternMatrix, prior: &PriorSpec, config: &ChainConfig) -> Result<()> {
    config.validate()?;
    prior.validate()?;
    if data.p() != pattern.p() {
        return Err(Error::Dimension(format!("data has {} items, pattern has {}", data.p(), pattern.p())));
    }
    if prior.kind == PriorKind::EncompassingBall && !data.is_standardized() {
        return Err(Error::StandardizedDataRequired);
    }
    let m = pattern.m();
    for j in 0..m {
        if pattern.anchor_row(j).is_some()
            && (0..pattern.p()).any(|i| matches!(pattern.get(i, j), CellStatus::FixedValue(c) if c != 0.0))
        {
            return Err(Error::InvalidModel(format!(
                "column {} has a positive anchor and a nonzero fixed value; sign is identified twice",
                j + 1
            )));
        }
    }
    if prior.rotation_jacobian {
        for j in 0..m {
            let a = pattern.anchor_row(j).ok_or_else(|| {
                Error::InvalidConfig(format!("echelon layout needs an anchor in column {}", j + 1))
            })?;
            if ((j + 1)..m).any(|k| pattern.get(a, k) != CellStatus::FixedZero) {
                return Err(Error::InvalidConfig(format!(
                    "echelon layout: anchor row {} of column {} must be zero in later columns",
                    a + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// Runs chain 0 of `config`.
pub fn run_chain(data: &Dataset, pattern: &PatternMatrix, prior: &PriorSpec, config: &ChainConfig) -> Result<Chain> {
    run_chain_indexed(data, pattern, prior, config, 0)
}

/// Runs chain `chain_index`; its seed is derived from `config.seed` and the index.
pub fn run_chain_indexed(
    data: &Dataset,
    pattern: &PatternMatrix,
    prior: &PriorSpec,
    config: &ChainConfig,
    chain_index: usize,
) -> Result<Chain> {
    check_inputs(data, pattern, prior, config)?;
    run_clamped(data, pattern, prior, config, chain_index, &Clamp::default())
}

/// Runs all `config.n_chains` chains in index order.
pub fn run_chains(data: &Dataset, pattern: &PatternMatrix, prior: &PriorSpec, config: &ChainConfig) -> Result<Vec<Chain>> {
    (0..config.n_chains).map(|c| run_chain_indexed(data, pattern, prior, config, c)).collect()
}
