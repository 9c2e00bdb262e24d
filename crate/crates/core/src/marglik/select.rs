//! Choosing the number of factors of an exploratory model.
//!
//! Each dimensionality k is fitted as an orthogonal model in echelon
//! coordinates: the leader row of column j carries a positive anchor and is
//! fixed at zero in every later column. These are exactly the `k(k−1)/2` zeros
//! needed to remove rotations, and the prior includes the Jacobian of the
//! echelon map, so the implied prior on unrestricted loadings stays flat and
//! rotation invariant. Leader rows are picked by column pivoting on a
//! principal-axis solution so that they load well on their factors.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{
    candidate_from_chains, combine_intrinsic, training_marginals, IntrinsicConfig, MarglikConfig, MarglikEstimate,
    RegularityReport, RegularityThresholds,
};
use super::regularity::assess_regularity;
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::model::{Dataset, PatternMatrix};
use crate::sampler::{run_chains, Chain, ChainConfig, PriorSpec};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionConfig {
    pub k_max: usize,
    pub marglik: MarglikConfig,
    /// Chain settings for training-subsample fits (seed derived per subsample).
    pub training_chain: ChainConfig,
    /// Defaults to `k_max + 3`.
    pub n_train: Option<usize>,
    pub n_subsamples: usize,
    pub max_failure_fraction: f64,
    pub thresholds: RegularityThresholds,
}

impl SelectionConfig {
    pub fn new(k_max: usize, chain: ChainConfig) -> Self {
        SelectionConfig {
            k_max,
            training_chain: ChainConfig { n_chains: 1, ..chain.clone() },
            marglik: MarglikConfig::with_chain(chain),
            n_train: None,
            n_subsamples: 30,
            max_failure_fraction: 0.2,
            thresholds: RegularityThresholds::default(),
        }
    }

    pub fn n_train(&self) -> usize {
        self.n_train.unwrap_or(self.k_max + 3)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DimensionRecord {
    pub k: usize,
    /// Leader (anchor) rows, 0-based, one per factor.
    pub leaders: Vec<usize>,
    pub marglik: Option<MarglikEstimate>,
    /// `log B_{k,0}`: intrinsic under an improper prior, direct under a proper one.
    pub log_bf_vs_zero: Option<f64>,
    pub log_bf_se: Option<f64>,
    pub training_failures: usize,
    pub regularity: RegularityReport,
    pub admissible: bool,
    /// Why the record is inadmissible or incomplete.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConsecutiveBf {
    pub from_k: usize,
    pub to_k: usize,
    pub log_bf: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DimensionalitySelection {
    pub records: Vec<DimensionRecord>,
    pub selected_k: usize,
    pub consecutive_log_bf: Vec<ConsecutiveBf>,
    /// Training-sample settings; unused (zero subsamples) under a proper prior.
    pub n_train: usize,
    pub n_subsamples: usize,
    pub seed: u64,
    pub thresholds: RegularityThresholds,
}

/// Leader rows for `k` factors: greedy column pivoting on principal-axis loadings.
pub fn efa_leaders(data: &Dataset, k: usize) -> Vec<usize> {
    let p = data.p();
    let k = k.min(p);
    let (vals, vecs) = symmetric_eigen(&data.sample_covariance());
    let mut a = Matrix::zeros(p, k);
    for j in 0..k {
        let s = libm::sqrt(vals[j].max(0.0));
        for i in 0..p {
            a[(i, j)] = vecs[(i, j)] * s;
        }
    }
    let mut leaders = Vec::with_capacity(k);
    for _ in 0..k {
        let best = (0..p)
            .filter(|i| !leaders.contains(i))
            .max_by(|&x, &y| {
                let nx: f64 = a.row(x).iter().map(|v| v * v).sum();
                let ny: f64 = a.row(y).iter().map(|v| v * v).sum();
                nx.partial_cmp(&ny).unwrap_or(core::cmp::Ordering::Equal).then(y.cmp(&x))
            })
            .expect("k ≤ p");
        leaders.push(best);
        // project every row onto the orthogonal complement of the chosen row
        let dir = a.row(best).to_vec();
        let norm2: f64 = dir.iter().map(|v| v * v).sum();
        if norm2 > 0.0 {
            for i in 0..p {
                let c = crate::linalg::dot(a.row(i), &dir) / norm2;
                for (v, d) in a.row_mut(i).iter_mut().zip(&dir) {
                    *v -= c * d;
                }
            }
        }
    }
    leaders
}

/// Echelon exploratory pattern with the given leader rows.
pub fn efa_pattern(p: usize, leaders: &[usize]) -> Result<PatternMatrix> {
    PatternMatrix::efa_echelon(p, leaders)
}

fn efa_prior(base: &PriorSpec) -> PriorSpec {
    PriorSpec { rotation_jacobian: true, ..*base }
}

/// Fits k = 0..=k_max, assesses regularity and Bayes factors against k = 0, and
/// selects the admissible k with the largest Bayes factor. Under an improper
/// prior the Bayes factors are intrinsic (training-sample corrected); under a
/// proper prior the marginal likelihoods are compared directly.
pub fn select_dimensionality(data: &Dataset, prior: &PriorSpec, config: &SelectionConfig) -> Result<DimensionalitySelection> {
    select_dimensionality_with(data, prior, config, &mut |_, _, _| {})
}

/// [`select_dimensionality`], handing the chains of every fitted `k` (with its
/// pattern) to `observe` before they are dropped.
pub fn select_dimensionality_with(
    data: &Dataset,
    prior: &PriorSpec,
    config: &SelectionConfig,
    observe: &mut dyn FnMut(usize, &PatternMatrix, &[Chain]),
) -> Result<DimensionalitySelection> {
    if config.k_max == 0 {
        return Err(Error::InvalidConfig("k_max must be at least 1".into()));
    }
    if config.k_max >= data.p() {
        return Err(Error::InvalidConfig(format!(
            "k_max ({}) must be smaller than the number of items ({})",
            config.k_max,
            data.p()
        )));
    }
    let seed = config.marglik.chain.seed;
    let n_train = config.n_train();
    let icfg = IntrinsicConfig {
        n_train,
        n_subsamples: config.n_subsamples,
        training_chain: config.training_chain.clone(),
        max_failure_fraction: config.max_failure_fraction,
    };
    let chain_cfg = ChainConfig { retain_score_stats: true, ..config.marglik.chain.clone() };

    struct Fit {
        leaders: Vec<usize>,
        full: Result<MarglikEstimate>,
        train: Result<Vec<Option<MarglikEstimate>>>,
        regularity: RegularityReport,
    }
    let mut fits = Vec::with_capacity(config.k_max + 1);
    for k in 0..=config.k_max {
        let leaders = efa_leaders(data, k);
        let pattern = efa_pattern(data.p(), &leaders)?;
        let prior_k = efa_prior(prior);
        let chains = run_chains(data, &pattern, &prior_k, &chain_cfg);
        let (full, regularity) = match chains {
            Ok(chains) => {
                observe(k, &pattern, &chains);
                (
                    candidate_from_chains(data, &pattern, &prior_k, &chains, &config.marglik),
                    assess_regularity(&chains, &pattern, &config.thresholds),
                )
            }
            Err(e) => (Err(e), assess_regularity(&[], &pattern, &config.thresholds)),
        };
        // a proper prior needs no training-sample correction
        let train = if prior.is_proper() {
            Ok(Vec::new())
        } else {
            training_marginals(data, &pattern, &prior_k, &icfg, &config.marglik, seed)
        };
        fits.push(Fit { leaders, full, train, regularity });
    }

    let mut records = Vec::with_capacity(fits.len());
    let base = match (&fits[0].full, &fits[0].train) {
        (Ok(f), Ok(t)) => Some((f.clone(), t.clone())),
        _ => None,
    };
    for (k, fit) in fits.into_iter().enumerate() {
        let mut note = None;
        let mut bf = None;
        let mut failures = 0;
        match (&base, &fit.full, &fit.train) {
            (Some((f0, t0)), Ok(fk), Ok(tk)) => {
                failures = tk.iter().filter(|e| e.is_none()).count();
                if prior.is_proper() {
                    bf = Some((
                        fk.log_marginal - f0.log_marginal,
                        libm::sqrt(fk.mc_standard_error * fk.mc_standard_error + f0.mc_standard_error * f0.mc_standard_error),
                    ));
                } else {
                    match combine_intrinsic(f0, fk, t0, tk, config.max_failure_fraction) {
                        Ok(b) => bf = Some((b.log_bf, b.mc_standard_error)),
                        Err(e) => note = Some(format!("{e}")),
                    }
                }
            }
            (None, _, _) => note = Some("reference model k = 0 could not be estimated".into()),
            (_, Err(e), _) | (_, _, Err(e)) => note = Some(format!("{e}")),
        }
        if fit.regularity.multimodality_flag && note.is_none() {
            note = Some(format!("regularity flag: {}", fit.regularity.triggered.join(", ")));
        }
        let admissible = bf.is_some() && !fit.regularity.multimodality_flag;
        records.push(DimensionRecord {
            k,
            leaders: fit.leaders,
            marglik: fit.full.ok(),
            log_bf_vs_zero: bf.map(|b| b.0),
            log_bf_se: bf.map(|b| b.1),
            training_failures: failures,
            regularity: fit.regularity,
            admissible,
            note,
        });
    }
    let selected = records
        .iter()
        .filter(|r| r.admissible)
        .max_by(|a, b| a.log_bf_vs_zero.partial_cmp(&b.log_bf_vs_zero).unwrap_or(core::cmp::Ordering::Equal))
        .map(|r| r.k)
        .ok_or(Error::NoAdmissibleDimensionality)?;
    let mut consecutive_log_bf = vec![];
    for w in records.windows(2) {
        if let (Some(a), Some(b), Some(sa), Some(sb)) = (w[0].log_bf_vs_zero, w[1].log_bf_vs_zero, w[0].log_bf_se, w[1].log_bf_se) {
            consecutive_log_bf.push(ConsecutiveBf {
                from_k: w[0].k,
                to_k: w[1].k,
                log_bf: b - a,
                se: libm::sqrt(sa * sa + sb * sb),
            });
        }
    }
    Ok(DimensionalitySelection {
        records,
        selected_k: selected,
        consecutive_log_bf,
        n_train: if prior.is_proper() { 0 } else { n_train },
        n_subsamples: if prior.is_proper() { 0 } else { config.n_subsamples },
        seed,
        thresholds: config.thresholds,
    })
}
