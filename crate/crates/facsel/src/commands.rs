//! The five subcommands as library functions: each reads its inputs, runs the
//! core computation, writes its artifacts and returns the report it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use facsel_core::constraints::{BoundSystem, ConstraintSystem};
use facsel_core::encompassing::{type2_bayes_factors, PriorDrawConfig, Type2Config, Type2Report};
use facsel_core::identification::{check_ucfm, IdentificationReport};
use facsel_core::linalg::Matrix;
use facsel_core::marglik::{select_dimensionality_with, DimensionalitySelection, SelectionConfig};
use facsel_core::model::{generate_synthetic, standardize};
use facsel_core::sampler::{run_chains, Chain, PriorSpec, Provenance};
use facsel_core::stats::derive_seed;
use facsel_core::{CellStatus, Dataset, FactorModel, PatternMatrix, TrueModelSpec};
use serde::{Deserialize, Serialize};

use crate::config::{Bf2Config, DimSelectConfig, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::io::{self, DrawFile, Histogram};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Generating model of `simulate`. Unique variances default to `1 − communality`
/// and factor correlations to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    /// One row per item.
    pub loadings: Vec<Vec<f64>>,
    #[serde(default)]
    pub unique_variances: Option<Vec<f64>>,
    #[serde(default)]
    pub factor_correlations: Option<Vec<Vec<f64>>>,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub item_names: Option<Vec<String>>,
}

fn matrix_from_rows(path: &Path, field: &str, rows: &[Vec<f64>], cols: Option<usize>) -> CliResult<Matrix> {
    let width = cols.or_else(|| rows.first().map(Vec::len)).unwrap_or(0);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(CliError::parse(
                path,
                format!("field `{field}[{i}]`"),
                format!("row has {} entries, expected {width}", r.len()),
            ));
        }
    }
    Ok(Matrix::from_vec(rows.len(), width, rows.iter().flatten().copied().collect()))
}

impl SimulationSpec {
    pub fn to_true_model(&self, path: &Path) -> CliResult<TrueModelSpec> {
        let loadings = matrix_from_rows(path, "loadings", &self.loadings, None)?;
        let (p, m) = (loadings.rows(), loadings.cols());
        let psi = match &self.unique_variances {
            Some(v) if v.len() != p => {
                return Err(CliError::parse(
                    path,
                    "field `unique_variances`",
                    format!("{} entries for {p} items", v.len()),
                ))
            }
            Some(v) => v.clone(),
            None => (0..p).map(|i| 1.0 - loadings.row(i).iter().map(|x| x * x).sum::<f64>()).collect(),
        };
        let phi = match &self.factor_correlations {
            Some(rows) => {
                if rows.len() != m {
                    return Err(CliError::parse(
                        path,
                        "field `factor_correlations`",
                        format!("{} rows for {m} factors", rows.len()),
                    ));
                }
                matrix_from_rows(path, "factor_correlations", rows, Some(m))?
            }
            None => Matrix::identity(m),
        };
        let model = FactorModel::new(loadings, psi, phi).map_err(|e| CliError::parse(path, "field `loadings`", e.to_string()))?;
        TrueModelSpec::new(model, self.n, self.seed).map_err(|e| CliError::parse(path, "field `n`", e.to_string()))
    }
}

/// Simulates a data set; the seed argument overrides the simulation file's.
pub fn simulate(spec_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<Dataset> {
    let mut spec: SimulationSpec = io::read_json(spec_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let truth = spec.to_true_model(spec_path)?;
    let mut data = generate_synthetic(&truth);
    if let Some(names) = &spec.item_names {
        if names.len() != data.p() {
            return Err(CliError::parse(spec_path, "field `item_names`", format!("{} names for {} items", names.len(), data.p())));
        }
        data = Dataset::new(data.values().clone(), names.clone()).map_err(|e| CliError::core("simulate", e))?;
    }
    io::write_text(out, &io::format_dataset(&data))?;
    Ok(data)
}

fn prepare(data: &Dataset, standardize_first: bool) -> CliResult<Dataset> {
    if standardize_first {
        standardize(data).map_err(|e| CliError::core("standardizing data", e))
    } else {
        Ok(data.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimSelectReport {
    pub version: String,
    pub seed: u64,
    pub data: String,
    pub n: usize,
    pub p: usize,
    pub config: DimSelectConfig,
    pub selection: DimensionalitySelection,
    /// Per-k loading histogram files, relative to the report.
    pub histogram_files: Vec<String>,
}

/// Fits k = 0..=k_max and writes `dim_select.json` plus `histograms_k{k}.csv` to `out_dir`.
pub fn dim_select(data: &Dataset, data_label: &str, config: &DimSelectConfig, seed: u64, out_dir: Option<&Path>) -> CliResult<DimSelectReport> {
    let prepared = prepare(data, config.standardize)?;
    let mut selection_cfg = SelectionConfig::new(config.k_max, config.chain.to_config(seed));
    selection_cfg.n_train = config.n_train;
    selection_cfg.n_subsamples = config.n_subsamples;
    selection_cfg.thresholds = config.thresholds;
    selection_cfg.marglik.batches = config.batches;
    let mut histograms: Vec<(usize, Vec<Histogram>)> = Vec::new();
    let bins = config.histogram_bins;
    let selection = select_dimensionality_with(&prepared, &config.prior.to_spec(), &selection_cfg, &mut |k, _, chains| {
        if k > 0 {
            histograms.push((k, io::loading_histograms(chains, bins)));
        }
    })
    .map_err(|e| CliError::core("dimensionality selection", e))?;
    let histogram_files: Vec<String> = histograms.iter().map(|(k, _)| format!("histograms_k{k}.csv")).collect();
    let report = DimSelectReport {
        version: VERSION.to_string(),
        seed,
        data: data_label.to_string(),
        n: data.n(),
        p: data.p(),
        config: config.clone(),
        selection,
        histogram_files,
    };
    if let Some(dir) = out_dir {
        for (k, h) in &histograms {
            io::write_text(&dir.join(format!("histograms_k{k}.csv")), &io::format_histograms(h))?;
        }
        io::write_json(&dir.join("dim_select.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub version: String,
    pub pattern: String,
    pub report: IdentificationReport,
}

pub fn check(pattern_path: &Path) -> CliResult<CheckReport> {
    let pattern = io::read_pattern(pattern_path)?;
    Ok(CheckReport {
        version: VERSION.to_string(),
        pattern: pattern_path.display().to_string(),
        report: check_ucfm(&pattern),
    })
}

fn identification_failure(report: &IdentificationReport) -> String {
    let failed: Vec<String> = report
        .conditions()
        .iter()
        .filter(|(_, c)| !c.passed)
        .flat_map(|(name, c)| c.messages.iter().map(move |m| format!("{name}: {m}")))
        .collect();
    format!("base pattern is not identified ({})", failed.join("; "))
}

/// Where the posterior draws of `bf2` came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawSource {
    Sampler { n_obs: usize, ball_fallbacks: usize },
    Files { paths: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bf2Report {
    pub version: String,
    pub seed: u64,
    pub data: Option<String>,
    pub pattern: String,
    pub constraint_files: Vec<String>,
    pub config: Bf2Config,
    pub identification: IdentificationReport,
    /// True when the pattern failed identification and `allow_unidentified` let the run proceed.
    pub identification_overridden: bool,
    pub draws: DrawSource,
    pub posterior_draws: usize,
    pub draw_files: Vec<String>,
    pub type2: Type2Report,
}

/// Inputs of `bf2`; exactly one of `data` or `draw_files` supplies the posterior.
pub struct Bf2Inputs<'a> {
    pub data: Option<(&'a Dataset, String)>,
    pub draw_files: Vec<PathBuf>,
    pub pattern: PatternMatrix,
    pub pattern_label: String,
    pub systems: Vec<(PathBuf, ConstraintSystem)>,
}

pub fn load_systems(paths: &[PathBuf]) -> CliResult<Vec<(PathBuf, ConstraintSystem)>> {
    paths.iter().map(|p| Ok((p.clone(), io::read_constraints(p)?))).collect()
}

fn chains_from_files(paths: &[PathBuf], pattern: &PatternMatrix, prior: PriorSpec, config: &Bf2Config, seed: u64) -> CliResult<Vec<Chain>> {
    let mut chains = Vec::new();
    for (index, path) in paths.iter().enumerate() {
        let DrawFile { p, m, draws, log_kernel } = io::parse_draws(path, &io::read_text(path)?)?;
        if (p, m) != (pattern.p(), pattern.m()) {
            return Err(CliError::Model(format!(
                "{}: draws are {p} × {m} but the pattern is {} × {}",
                path.display(),
                pattern.p(),
                pattern.m()
            )));
        }
        for (t, d) in draws.iter().enumerate() {
            let respects = (0..p).all(|i| {
                (0..m).all(|j| match pattern.get(i, j) {
                    CellStatus::Free => true,
                    CellStatus::PositiveAnchor => d.loadings[(i, j)] > 0.0,
                    CellStatus::FixedZero => d.loadings[(i, j)] == 0.0,
                    CellStatus::FixedValue(c) => d.loadings[(i, j)] == c,
                })
            });
            if !respects {
                return Err(CliError::Model(format!("{}: draw {} does not follow the base pattern", path.display(), t + 1)));
            }
        }
        let chain_cfg = config.chain.to_config(seed);
        chains.push(Chain {
            draws,
            log_posterior_kernel: log_kernel,
            factor_score_draws: None,
            score_stats: None,
            provenance: Provenance { prior, pattern: pattern.clone(), config: chain_cfg, chain_index: index, seed, n_obs: 0 },
            ball_fallbacks: 0,
        });
    }
    Ok(chains)
}

/// Encompassing-prior Bayes factors of every constraint system against the base pattern.
/// Writes `type2.json` (and draw files when requested) to `out_dir`.
pub fn bf2(inputs: &Bf2Inputs<'_>, config: &Bf2Config, seed: u64, out_dir: Option<&Path>) -> CliResult<Bf2Report> {
    let pattern = &inputs.pattern;
    let identification = check_ucfm(pattern);
    if !identification.overall && !config.allow_unidentified {
        return Err(CliError::Model(format!("{}; set allow_unidentified to override", identification_failure(&identification))));
    }
    let bound: Vec<BoundSystem> = inputs
        .systems
        .iter()
        .map(|(path, system)| io::bind_constraints(path, system, pattern))
        .collect::<CliResult<_>>()?;
    let prior = PriorSpec::encompassing(config.factor_correlations.phi_prior());
    let (chains, draws) = match (&inputs.data, inputs.draw_files.is_empty()) {
        (Some((data, _)), true) => {
            let prepared = prepare(data, config.standardize)?;
            let chains = run_chains(&prepared, pattern, &prior, &config.chain.to_config(seed))
                .map_err(|e| CliError::core("posterior sampling", e))?;
            let fallbacks = chains.iter().map(|c| c.ball_fallbacks).sum();
            (chains, DrawSource::Sampler { n_obs: data.n(), ball_fallbacks: fallbacks })
        }
        (None, false) => {
            let chains = chains_from_files(&inputs.draw_files, pattern, prior, config, seed)?;
            (chains, DrawSource::Files { paths: inputs.draw_files.iter().map(|p| p.display().to_string()).collect() })
        }
        _ => return Err(CliError::Usage("bf2 needs either a data file or draw files, not both".into())),
    };
    let type2_cfg = Type2Config {
        prior_draws: PriorDrawConfig {
            n_draws: config.prior_draws,
            phi_mode: config.factor_correlations.phi_mode(),
            seed: derive_seed(seed, &[0xB2]),
        },
        prior_odds: config.prior_odds.clone(),
    };
    let type2 = type2_bayes_factors(&bound, &chains, &type2_cfg).map_err(|e| CliError::core("Type II Bayes factors", e))?;
    let draw_files: Vec<String> = if config.export_draws && out_dir.is_some() {
        (0..chains.len()).map(|c| format!("draws_chain{}.csv", c + 1)).collect()
    } else {
        Vec::new()
    };
    let report = Bf2Report {
        version: VERSION.to_string(),
        seed,
        data: inputs.data.as_ref().map(|(_, label)| label.clone()),
        pattern: inputs.pattern_label.clone(),
        constraint_files: inputs.systems.iter().map(|(p, _)| p.display().to_string()).collect(),
        config: config.clone(),
        identification_overridden: !identification.overall,
        identification,
        draws,
        posterior_draws: chains.iter().map(|c| c.len()).sum(),
        draw_files,
        type2,
    };
    if let Some(dir) = out_dir {
        for (name, chain) in report.draw_files.iter().zip(&chains) {
            io::write_text(&dir.join(name), &io::format_draws(chain))?;
        }
        io::write_json(&dir.join("type2.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    /// Stages in execution order; a failed stage is the last entry.
    pub stages: Vec<StageRecord>,
    pub dimensionality: Option<DimSelectReport>,
    pub identification: Option<IdentificationReport>,
    pub type2: Option<Bf2Report>,
    pub completed: bool,
}

pub const STAGES: [&str; 4] =
    ["i: dimensionality", "ii: ucfm specification", "iii: constraint systems", "iv: type II selection"];

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a pipeline config and resolves its paths against the config file's directory.
pub fn load_pipeline_config(path: &Path) -> CliResult<PipelineConfig> {
    let mut cfg: PipelineConfig = io::read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.data = resolve(base, &cfg.data);
    cfg.pattern = resolve(base, &cfg.pattern);
    cfg.constraints = cfg.constraints.iter().map(|c| resolve(base, c)).collect();
    cfg.out_dir = resolve(base, &cfg.out_dir);
    Ok(cfg)
}

/// Runs the four stages in order, rewriting `pipeline_report.json` after each one.
/// On failure the partial report is kept on disk and the stage's error returned.
pub fn pipeline(config: &PipelineConfig) -> CliResult<PipelineReport> {
    let out = config.out_dir.clone();
    let mut report = PipelineReport {
        version: VERSION.to_string(),
        seed: config.seed,
        config: config.clone(),
        stages: Vec::new(),
        dimensionality: None,
        identification: None,
        type2: None,
        completed: false,
    };
    let result = run_stages(config, &out, &mut report);
    report.completed = result.is_ok();
    io::write_json(&out.join("pipeline_report.json"), &report)?;
    result.map(|()| report)
}

fn record<T>(report: &mut PipelineReport, out: &Path, stage: usize, f: impl FnOnce(&mut PipelineReport) -> CliResult<T>) -> CliResult<T> {
    let start = Instant::now();
    let result = f(report);
    report.stages.push(StageRecord {
        stage: STAGES[stage].to_string(),
        status: if result.is_ok() { StageStatus::Completed } else { StageStatus::Failed },
        seconds: start.elapsed().as_secs_f64(),
        error: result.as_ref().err().map(|e| e.to_string()),
    });
    if result.is_ok() {
        io::write_json(&out.join("pipeline_report.json"), report)?;
    }
    result.map_err(|e| CliError::Stage { stage: STAGES[stage].to_string(), source: Box::new(e) })
}

fn run_stages(config: &PipelineConfig, out: &Path, report: &mut PipelineReport) -> CliResult<()> {
    let data_label = config.data.display().to_string();
    let data = record(report, out, 0, |report| {
        let data = io::read_dataset(&config.data)?;
        let dim = dim_select(&data, &data_label, &config.dim_select, derive_seed(config.seed, &[1]), Some(out))?;
        report.dimensionality = Some(dim);
        Ok(data)
    })?;
    let selected_k = report.dimensionality.as_ref().map_or(0, |d| d.selection.selected_k);

    let pattern = record(report, out, 1, |report| {
        let pattern = io::read_pattern(&config.pattern)?;
        let id = check_ucfm(&pattern);
        io::write_json(&out.join("identification.json"), &id)?;
        let passed = id.overall;
        let failure = identification_failure(&id);
        report.identification = Some(id);
        if pattern.m() != selected_k {
            return Err(CliError::Model(format!(
                "the base pattern has {} factors but dimensionality selection chose k = {selected_k}",
                pattern.m()
            )));
        }
        if !passed && !config.bf2.allow_unidentified {
            return Err(CliError::Model(format!("{failure}; set allow_unidentified to override")));
        }
        Ok(pattern)
    })?;

    let systems = record(report, out, 2, |_| {
        let systems = load_systems(&config.constraints)?;
        for (path, system) in &systems {
            io::bind_constraints(path, system, &pattern)?;
        }
        Ok(systems)
    })?;

    record(report, out, 3, |report| {
        let inputs = Bf2Inputs {
            data: Some((&data, data_label.clone())),
            draw_files: Vec::new(),
            pattern: pattern.clone(),
            pattern_label: config.pattern.display().to_string(),
            systems,
        };
        report.type2 = Some(bf2(&inputs, &config.bf2, derive_seed(config.seed, &[2]), Some(out))?);
        Ok(())
    })
}
