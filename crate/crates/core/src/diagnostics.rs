//! Convergence and mode-splitting diagnostics over finished chains.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::model::FactorModel;
use crate::sampler::Chain;

/// Default threshold below which a column counts as numerically empty.
pub const NEAR_ZERO_LEVEL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParameterDiagnostic {
    pub name: String,
    /// Split potential scale reduction; `None` when every draw is identical.
    pub rhat: Option<f64>,
    /// Multi-chain effective sample size; `None` when every draw is identical.
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Diagnostics {
    pub parameters: Vec<ParameterDiagnostic>,
    /// Fraction of consecutive draws whose sign differs, averaged over chains (p × m).
    pub sign_switch_rate: Matrix,
    /// Per column, pooled fraction of draws with `maxᵢ |λᵢⱼ| < near_zero_level`.
    pub near_zero_mass: Vec<f64>,
    pub near_zero_level: f64,
    pub total_draws: usize,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> Option<f64> {
        self.parameters.iter().filter_map(|d| d.rhat).fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    pub fn min_ess(&self) -> Option<f64> {
        self.parameters.iter().filter_map(|d| d.ess).fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.min(r))))
    }

    pub fn get(&self, name: &str) -> Option<&ParameterDiagnostic> {
        self.parameters.iter().find(|d| d.name == name)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Split-R̂ over several traces of equal length; `None` without within-chain variance
/// or with fewer than four draws per trace.
///
/// The estimate is floored at 1: values slightly below 1 only reflect sampling noise
/// in the between-chain variance.
pub fn split_rhat(traces: &[&[f64]]) -> Option<f64> {
    let n = traces.iter().map(|t| t.len()).min()?;
    if n < 4 {
        return None;
    }
    let half = n / 2;
    let mut parts: Vec<&[f64]> = Vec::with_capacity(2 * traces.len());
    for t in traces {
        parts.push(&t[..half]);
        parts.push(&t[n - half..n]);
    }
    if all_identical(traces) {
        return None;
    }
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = parts.iter().map(|p| sample_var(p)).sum::<f64>() / parts.len() as f64;
    if !(w > 0.0) {
        return None;
    }
    let nn = half as f64;
    let b = nn * sample_var(&means);
    let var_plus = (nn - 1.0) / nn * w + b / nn;
    Some(libm::sqrt(var_plus / w).max(1.0))
}

/// Exact check: rounding in the mean can leave a tiny positive variance for constant draws.
fn all_identical(traces: &[&[f64]]) -> bool {
    let first = traces.iter().find_map(|t| t.first());
    traces.iter().flat_map(|t| t.iter()).all(|x| Some(x) == first)
}

fn autocovariance_at(xs: &[f64], m: f64, lag: usize) -> f64 {
    let n = xs.len();
    (0..n - lag).map(|t| (xs[t] - m) * (xs[t + lag] - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence,
/// capped at the total number of draws. `None` when all draws are identical.
pub fn effective_sample_size(traces: &[&[f64]]) -> Option<f64> {
    let n = traces.iter().map(|t| t.len()).min()?;
    let chains = traces.len();
    if n < 4 {
        return None;
    }
    let traces: Vec<&[f64]> = traces.iter().map(|t| &t[..n]).collect();
    if all_identical(&traces) {
        return None;
    }
    let max_lag = n - 1;
    let means: Vec<f64> = traces.iter().map(|t| mean(t)).collect();
    // autocovariances are computed lazily: the sum below usually stops after a few lags
    let acov = |lag: usize| {
        traces.iter().zip(&means).map(|(t, &m)| autocovariance_at(t, m, lag)).sum::<f64>() / chains as f64
    };
    let nn = n as f64;
    let w = acov(0) * nn / (nn - 1.0);
    if !(w > 0.0) {
        return None;
    }
    let b_over_n = if chains > 1 { sample_var(&means) } else { 0.0 };
    let var_plus = (nn - 1.0) / nn * w + b_over_n;
    let rho = |lag: usize| 1.0 - (w - acov(lag)) / var_plus;
    // pairs Γ_k = ρ_{2k} + ρ_{2k+1}, truncated at the first non-positive pair, made monotone
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 <= max_lag {
        let mut g = rho(2 * k) + rho(2 * k + 1);
        if g <= 0.0 {
            break;
        }
        if g > prev {
            g = prev;
        }
        tau += 2.0 * g;
        prev = g;
        k += 1;
    }
    let total = (chains * n) as f64;
    let tau = tau.max(1.0 / libm::log10(total.max(10.0)));
    Some((total / tau).min(total))
}

/// Names and extractors of the varying parameters of a chain's pattern.
fn parameter_traces(chains: &[Chain]) -> Vec<(String, Vec<Vec<f64>>)> {
    let first = &chains[0];
    let pattern = first.pattern();
    let (p, m) = (pattern.p(), pattern.m());
    let mut out = Vec::new();
    let collect = |f: &dyn Fn(&FactorModel) -> f64| -> Vec<Vec<f64>> {
        chains.iter().map(|c| c.draws.iter().map(f).collect()).collect()
    };
    for i in 0..p {
        for j in 0..m {
            if pattern.get(i, j).is_free() {
                out.push((format!("L[{},{}]", i + 1, j + 1), collect(&|d| d.loadings[(i, j)])));
            }
        }
    }
    for i in 0..p {
        out.push((format!("psi[{}]", i + 1), collect(&|d| d.unique_variances[i])));
    }
    if first.provenance.prior.phi_prior == crate::sampler::PhiPrior::CorrelationPrior {
        for j in 0..m {
            for k in (j + 1)..m {
                out.push((format!("phi[{},{}]", j + 1, k + 1), collect(&|d| d.factor_correlations[(j, k)])));
            }
        }
    }
    out
}

/// Diagnostics over chains sharing one pattern (at least one chain).
pub fn diagnostics(chains: &[Chain]) -> Diagnostics {
    diagnostics_with_level(chains, NEAR_ZERO_LEVEL)
}

pub fn diagnostics_with_level(chains: &[Chain], near_zero_level: f64) -> Diagnostics {
    assert!(!chains.is_empty(), "diagnostics need at least one chain");
    let pattern = chains[0].pattern();
    let (p, m) = (pattern.p(), pattern.m());
    let parameters = parameter_traces(chains)
        .into_iter()
        .map(|(name, traces)| {
            let refs: Vec<&[f64]> = traces.iter().map(|t| t.as_slice()).collect();
            ParameterDiagnostic { rhat: split_rhat(&refs), ess: effective_sample_size(&refs), name }
        })
        .collect();
    let mut sign_switch_rate = Matrix::zeros(p, m);
    for i in 0..p {
        for j in 0..m {
            let rates: Vec<f64> = chains
                .iter()
                .filter(|c| c.len() >= 2)
                .map(|c| {
                    let switches = c
                        .draws
                        .windows(2)
                        .filter(|w| (w[0].loadings[(i, j)] > 0.0) != (w[1].loadings[(i, j)] > 0.0))
                        .count();
                    switches as f64 / (c.len() - 1) as f64
                })
                .collect();
            sign_switch_rate[(i, j)] = if rates.is_empty() { 0.0 } else { mean(&rates) };
        }
    }
    let near_zero_mass = near_zero_column_mass(chains.iter().flat_map(|c| c.draws.iter()), m, near_zero_level);
    Diagnostics {
        parameters,
        sign_switch_rate,
        near_zero_mass,
        near_zero_level,
        total_draws: chains.iter().map(|c| c.len()).sum(),
    }
}

/// Per column, the fraction of draws whose largest absolute loading is below `level`.
pub fn near_zero_column_mass<'a>(draws: impl Iterator<Item = &'a FactorModel>, m: usize, level: f64) -> Vec<f64> {
    let mut counts = alloc::vec![0usize; m];
    let mut total = 0usize;
    for d in draws {
        total += 1;
        for (j, c) in counts.iter_mut().enumerate() {
            let max = (0..d.p()).map(|i| libm::fabs(d.loadings[(i, j)])).fold(0.0, f64::max);
            if max < level {
                *c += 1;
            }
        }
    }
    counts.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{rng_from_seed, std_normal};

    #[test]
    fn iid_draws_have_full_ess() {
        let mut rng = rng_from_seed(5);
        let a: Vec<f64> = (0..2000).map(|_| std_normal(&mut rng)).collect();
        let b: Vec<f64> = (0..2000).map(|_| std_normal(&mut rng)).collect();
        let ess = effective_sample_size(&[&a, &b]).unwrap();
        assert!((ess / 4000.0 - 1.0).abs() < 0.2, "{ess}");
        let r = split_rhat(&[&a, &b]).unwrap();
        assert!(r < 1.01);
    }

    #[test]
    fn autocorrelated_draws_have_reduced_ess() {
        let mut rng = rng_from_seed(6);
        let mut x = 0.0;
        let a: Vec<f64> = (0..4000)
            .map(|_| {
                x = 0.9 * x + std_normal(&mut rng);
                x
            })
            .collect();
        let ess = effective_sample_size(&[&a]).unwrap();
        // AR(1) with φ = 0.9: n (1−φ)/(1+φ) ≈ 210
        assert!(ess > 120.0 && ess < 350.0, "{ess}");
    }

    #[test]
    fn mirrored_modes_inflate_rhat() {
        let mut rng = rng_from_seed(7);
        let a: Vec<f64> = (0..1000).map(|_| 0.7 + 0.05 * std_normal(&mut rng)).collect();
        let b: Vec<f64> = (0..1000).map(|_| -0.7 + 0.05 * std_normal(&mut rng)).collect();
        assert!(split_rhat(&[&a, &b]).unwrap() > 1.5);
    }

    #[test]
    fn constant_draws_are_flagged_degenerate() {
        let a = [0.3; 100];
        assert_eq!(split_rhat(&[&a, &a]), None);
        assert_eq!(effective_sample_size(&[&a, &a]), None);
    }
}
