//! JSON configuration of every command. Missing fields take the documented
//! defaults; unknown fields are rejected so typos do not pass silently.

use std::path::PathBuf;

use facsel_core::encompassing::PhiMode;
use facsel_core::marglik::RegularityThresholds;
use facsel_core::sampler::{ChainConfig, PhiPrior, PriorSpec};
use serde::{Deserialize, Serialize};

/// Prior of the unrestricted (dimensionality) fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSettings {
    /// `N(0, loading_variance)` loadings, inverse-gamma unique variances.
    Conjugate { loading_variance: f64, ig_shape: f64, ig_rate: f64 },
    /// Flat loadings and `1/ψ`; Bayes factors use training samples.
    Improper,
}

impl Default for PriorSettings {
    fn default() -> Self {
        PriorSettings::Conjugate { loading_variance: 1.0, ig_shape: 1.0, ig_rate: 0.5 }
    }
}

impl PriorSettings {
    pub fn to_spec(self) -> PriorSpec {
        match self {
            PriorSettings::Conjugate { loading_variance, ig_shape, ig_rate } => {
                PriorSpec::conjugate(loading_variance, ig_shape, ig_rate)
            }
            PriorSettings::Improper => PriorSpec::improper(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSettings {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        let c = ChainConfig::default();
        ChainSettings { n_iter: c.n_iter, burn_in: c.burn_in, thin: c.thin, n_chains: c.n_chains }
    }
}

impl ChainSettings {
    pub fn to_config(self, seed: u64) -> ChainConfig {
        ChainConfig {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            thin: self.thin,
            n_chains: self.n_chains,
            seed,
            ..ChainConfig::default()
        }
    }
}

/// Whether the competing confirmatory models have correlated factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorCorrelations {
    /// `Φ = I`.
    #[default]
    Orthogonal,
    /// `Φ` uniform over correlation matrices.
    Oblique,
}

impl FactorCorrelations {
    pub fn phi_prior(self) -> PhiPrior {
        match self {
            FactorCorrelations::Orthogonal => PhiPrior::FixedIdentity,
            FactorCorrelations::Oblique => PhiPrior::CorrelationPrior,
        }
    }

    pub fn phi_mode(self) -> PhiMode {
        match self {
            FactorCorrelations::Orthogonal => PhiMode::Identity,
            FactorCorrelations::Oblique => PhiMode::FromPrior,
        }
    }
}

/// Settings of `dim-select` (and of the pipeline's first stage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimSelectConfig {
    pub k_max: usize,
    pub prior: PriorSettings,
    pub chain: ChainSettings,
    pub thresholds: RegularityThresholds,
    /// Scale every item to zero mean and unit variance before fitting.
    pub standardize: bool,
    /// Training-sample settings, used only with the improper prior.
    pub n_train: Option<usize>,
    pub n_subsamples: usize,
    pub batches: usize,
    pub histogram_bins: usize,
}

impl Default for DimSelectConfig {
    fn default() -> Self {
        DimSelectConfig {
            k_max: 5,
            prior: PriorSettings::default(),
            chain: ChainSettings::default(),
            thresholds: RegularityThresholds::default(),
            standardize: true,
            n_train: None,
            n_subsamples: 30,
            batches: 20,
            histogram_bins: 40,
        }
    }
}

/// Settings of `bf2` (and of the pipeline's last stage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bf2Config {
    pub chain: ChainSettings,
    pub factor_correlations: FactorCorrelations,
    pub prior_draws: usize,
    /// One entry per constraint file plus one for the unconstrained model; equal odds when absent.
    pub prior_odds: Option<Vec<f64>>,
    /// Proceed even if the base pattern fails the identification check (recorded in the report).
    pub allow_unidentified: bool,
    /// Write one draw file per chain next to the report.
    pub export_draws: bool,
    pub standardize: bool,
}

impl Default for Bf2Config {
    fn default() -> Self {
        Bf2Config {
            chain: ChainSettings::default(),
            factor_correlations: FactorCorrelations::default(),
            prior_draws: 100_000,
            prior_odds: None,
            allow_unidentified: false,
            export_draws: false,
            standardize: true,
        }
    }
}

/// The four-step workflow. Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: PathBuf,
    pub pattern: PathBuf,
    #[serde(default)]
    pub constraints: Vec<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub dim_select: DimSelectConfig,
    #[serde(default)]
    pub bf2: Bf2Config,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("facsel-out")
}

fn default_seed() -> u64 {
    1
}
