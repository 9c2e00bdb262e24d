//! Detection of rank-deficient (overfactored) fits.
//!
//! An overfactored model has loading columns that carry no signal; its
//! posterior splits into separated symmetric regions and the candidate
//! estimator loses simulation consistency. Three symptoms are checked: a small
//! singular-value ratio of the aligned posterior-mean loadings, columns that
//! often sit entirely near zero, and poor between-chain agreement after
//! aligning every draw to a common reference.

use alloc::string::String;
use alloc::vec::Vec;

use crate::diagnostics::{near_zero_column_mass, split_rhat};
use crate::linalg::{singular_values, Matrix};
use crate::model::PatternMatrix;
use crate::sampler::Chain;
use crate::symmetry::{align, stabilizer};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct RegularityThresholds {
    pub singular_value_ratio: f64,
    pub near_zero_level: f64,
    pub near_zero_mass: f64,
    pub rhat: f64,
}

impl Default for RegularityThresholds {
    fn default() -> Self {
        RegularityThresholds { singular_value_ratio: 0.1, near_zero_level: 0.1, near_zero_mass: 0.05, rhat: 1.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegularityReport {
    /// `σ_min/σ_max` of the aligned posterior-mean loadings (1 when m = 0).
    pub singular_value_ratio: f64,
    pub near_zero_mass: Vec<f64>,
    /// Largest split-R̂ over aligned loadings and unique variances; `None` if all degenerate.
    pub max_pooled_rhat: Option<f64>,
    pub multimodality_flag: bool,
    /// Which criteria tripped: any of "singular_value_ratio", "near_zero_column", "rhat".
    pub triggered: Vec<String>,
    pub thresholds: RegularityThresholds,
    /// Aligned posterior-mean loadings.
    pub posterior_mean_loadings: Matrix,
}

/// Regularity assessment over chains of one model (dispersed starts advised).
pub fn assess_regularity(chains: &[Chain], pattern: &PatternMatrix, thresholds: &RegularityThresholds) -> RegularityReport {
    let (p, m) = (pattern.p(), pattern.m());
    let draws: usize = chains.iter().map(|c| c.len()).sum();
    if m == 0 || draws == 0 {
        return RegularityReport {
            singular_value_ratio: 1.0,
            near_zero_mass: Vec::new(),
            max_pooled_rhat: None,
            multimodality_flag: false,
            triggered: Vec::new(),
            thresholds: *thresholds,
            posterior_mean_loadings: Matrix::zeros(p, m),
        };
    }
    let group = stabilizer(pattern);
    // reference: posterior mean of the first chain, refined once after alignment
    let mut reference = mean_loadings(chains[0].draws.iter().map(|d| &d.loadings));
    let mut aligned: Vec<Vec<Matrix>> = Vec::new();
    for _ in 0..2 {
        aligned = chains
            .iter()
            .map(|c| c.draws.iter().map(|d| align(&d.loadings, &reference, &group).apply_loadings(&d.loadings)).collect())
            .collect();
        reference = mean_loadings(aligned.iter().flatten());
    }
    let sv = singular_values(&reference);
    let (smax, smin) = (sv.iter().copied().fold(0.0, f64::max), sv.iter().copied().fold(f64::INFINITY, f64::min));
    let singular_value_ratio = if smax > 0.0 { smin / smax } else { 0.0 };

    let models = chains.iter().flat_map(|c| c.draws.iter());
    let near_zero_mass = near_zero_column_mass(models, m, thresholds.near_zero_level);

    let mut max_rhat: Option<f64> = None;
    let mut consider = |traces: Vec<Vec<f64>>| {
        let refs: Vec<&[f64]> = traces.iter().map(|t| t.as_slice()).collect();
        if let Some(r) = split_rhat(&refs) {
            max_rhat = Some(max_rhat.map_or(r, |a| a.max(r)));
        }
    };
    for i in 0..p {
        for j in 0..m {
            if pattern.get(i, j).is_free() {
                consider(aligned.iter().map(|c| c.iter().map(|l| l[(i, j)]).collect()).collect());
            }
        }
        consider(chains.iter().map(|c| c.draws.iter().map(|d| d.unique_variances[i]).collect()).collect());
    }

    let mut triggered = Vec::new();
    if singular_value_ratio < thresholds.singular_value_ratio {
        triggered.push("singular_value_ratio".into());
    }
    if near_zero_mass.iter().any(|&v| v > thresholds.near_zero_mass) {
        triggered.push("near_zero_column".into());
    }
    if max_rhat.map_or(false, |r| r > thresholds.rhat) {
        triggered.push("rhat".into());
    }
    RegularityReport {
        singular_value_ratio,
        near_zero_mass,
        max_pooled_rhat: max_rhat,
        multimodality_flag: !triggered.is_empty(),
        triggered,
        thresholds: *thresholds,
        posterior_mean_loadings: reference,
    }
}

fn mean_loadings<'a>(mats: impl Iterator<Item = &'a Matrix>) -> Matrix {
    let mut acc: Option<Matrix> = None;
    let mut count = 0usize;
    for l in mats {
        count += 1;
        acc = Some(match acc {
            None => l.clone(),
            Some(a) => a.add(l),
        });
    }
    acc.map(|a| a.scale(1.0 / count as f64)).unwrap_or_else(|| Matrix::zeros(0, 0))
}
