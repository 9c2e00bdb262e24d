//! File formats: data CSV, pattern grids, constraint files, draw exports and
//! histogram exports.

use std::fs;
use std::path::Path;

use facsel_core::constraints::{self, BindError, BoundSystem, ConstraintSystem};
use facsel_core::linalg::Matrix;
use facsel_core::sampler::Chain;
use facsel_core::{CellStatus, Dataset, FactorModel, PatternMatrix};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Reads a JSON document, reporting the field path of any schema error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    parse_json(path, &text)
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let location =
            if field == "." { format!("line {}, column {}", inner.line(), inner.column()) } else { format!("field `{field}`") };
        CliError::parse(path, location, inner.to_string())
    })
}

/// Pretty JSON with a trailing newline; deterministic for a given value.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_text(path, &text)
}

/// Comma-separated data: one header row of item names, one row per observation.
pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let text = read_text(path)?;
    parse_dataset(path, &text)
}

pub fn parse_dataset(path: &Path, text: &str) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(path, &e))?.clone();
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if let Some(col) = names.iter().position(|n| n.is_empty()) {
        return Err(CliError::parse(path, format!("line 1, column {}", col + 1), "empty item name"));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::parse(path, format!("line {line}, column {}", col + 1), format!("'{field}' is not a number"))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let matrix = Matrix::from_vec(rows, names.len(), values);
    Dataset::new(matrix, names).map_err(|e| CliError::core(path.display().to_string(), e))
}

fn csv_error(path: &Path, e: &csv::Error) -> CliError {
    let location = e.position().map_or_else(|| "input".to_string(), |p| format!("line {}", p.line()));
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("ragged row: {len} fields where the header has {expected_len}")
        }
        _ => e.to_string(),
    };
    CliError::parse(path, location, message)
}

/// Writes data with shortest round-trip formatting, so a rerun is byte-identical.
pub fn format_dataset(data: &Dataset) -> String {
    let mut out = data.item_names().join(",");
    out.push('\n');
    let values = data.values();
    for i in 0..data.n() {
        let row: Vec<String> = values.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Pattern grid: one row per item; tokens `*` (free), `0` (fixed zero),
/// `+` (positive anchor) or a number (fixed value), separated by whitespace or commas.
/// `#` starts a comment.
pub fn read_pattern(path: &Path) -> CliResult<PatternMatrix> {
    let text = read_text(path)?;
    parse_pattern(path, &text)
}

pub fn parse_pattern(path: &Path, text: &str) -> CliResult<PatternMatrix> {
    let mut rows: Vec<Vec<CellStatus>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        let mut row = Vec::new();
        let mut column = 0;
        for token in body.split(|c: char| c == ',' || c.is_whitespace()) {
            let start = column;
            column += token.chars().count() + 1;
            if token.is_empty() {
                continue;
            }
            let status = match token {
                "*" => CellStatus::Free,
                "+" => CellStatus::PositiveAnchor,
                _ => match token.parse::<f64>() {
                    Ok(v) if v == 0.0 => CellStatus::FixedZero,
                    Ok(v) if v.is_finite() => CellStatus::FixedValue(v),
                    _ => {
                        return Err(CliError::parse(
                            path,
                            format!("line {line}, column {}", start + 1),
                            format!("unknown cell token '{token}'; expected '*', '0', '+' or a number"),
                        ))
                    }
                },
            };
            row.push(status);
        }
        if row.is_empty() {
            continue;
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::parse(
                    path,
                    format!("line {line}"),
                    format!("row has {} cells where earlier rows have {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::parse(path, "line 1", "pattern file has no rows"));
    }
    PatternMatrix::from_rows(&rows).map_err(|e| CliError::core(path.display().to_string(), e))
}

pub fn format_pattern(pattern: &PatternMatrix) -> String {
    let mut out = String::new();
    for i in 0..pattern.p() {
        let cells: Vec<String> = pattern
            .row(i)
            .iter()
            .map(|c| match c {
                CellStatus::Free => "*".to_string(),
                CellStatus::FixedZero => "0".to_string(),
                CellStatus::PositiveAnchor => "+".to_string(),
                CellStatus::FixedValue(v) => format!("{v}"),
            })
            .collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a `.fcs` constraint file; a file without a `model` line is named after its stem.
pub fn read_constraints(path: &Path) -> CliResult<ConstraintSystem> {
    let text = read_text(path)?;
    let mut system = constraints::parse(&text)
        .map_err(|e| CliError::parse(path, format!("line {}, column {}", e.line, e.column), e.message))?;
    if !text.lines().any(|l| l.trim_start().starts_with("model")) {
        if let Some(stem) = path.file_stem() {
            system.model_name = stem.to_string_lossy().into_owned();
        }
    }
    Ok(system)
}

pub fn bind_constraints(path: &Path, system: &ConstraintSystem, pattern: &PatternMatrix) -> CliResult<BoundSystem> {
    constraints::bind(system, pattern).map_err(|BindError { line, message }| {
        let location = line.map_or_else(|| "binding".to_string(), |l| format!("line {l}"));
        CliError::parse(path, location, message)
    })
}

/// Column names of a draw export for a `p × m` model.
pub fn draw_columns(p: usize, m: usize) -> Vec<String> {
    let mut cols = Vec::new();
    for i in 1..=p {
        for j in 1..=m {
            cols.push(format!("L[{i},{j}]"));
        }
    }
    cols.extend((1..=p).map(|i| format!("psi[{i}]")));
    for a in 1..=m {
        for b in (a + 1)..=m {
            cols.push(format!("phi[{a},{b}]"));
        }
    }
    cols.push("logkernel".to_string());
    cols
}

fn csv_string(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("writing to memory")).expect("fields are UTF-8")
}

/// One retained draw per row; names such as `L[1,2]` are quoted.
pub fn format_draws(chain: &Chain) -> String {
    let (p, m) = (chain.pattern().p(), chain.pattern().m());
    let rows = chain.draws.iter().zip(&chain.log_posterior_kernel).map(|(draw, kernel)| {
        let mut row: Vec<String> = draw.loadings.as_slice().iter().map(|v| format!("{v}")).collect();
        row.extend(draw.unique_variances.iter().map(|v| format!("{v}")));
        for a in 0..m {
            for b in (a + 1)..m {
                row.push(format!("{}", draw.factor_correlations[(a, b)]));
            }
        }
        row.push(format!("{kernel}"));
        row
    });
    csv_string(std::iter::once(draw_columns(p, m)).chain(rows))
}

/// Draws read back from an export.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawFile {
    pub p: usize,
    pub m: usize,
    pub draws: Vec<FactorModel>,
    pub log_kernel: Vec<f64>,
}

pub fn parse_draws(path: &Path, text: &str) -> CliResult<DrawFile> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, &e))?.iter().map(str::to_string).collect();
    let p = header.iter().filter(|h| h.starts_with("psi[")).count();
    let n_loadings = header.iter().filter(|h| h.starts_with("L[")).count();
    if p == 0 || n_loadings % p != 0 {
        return Err(CliError::parse(path, "line 1", "header needs psi[i] columns and a full L[i,j] block"));
    }
    let m = n_loadings / p;
    let expected = draw_columns(p, m);
    if header != expected {
        return Err(CliError::parse(
            path,
            "line 1",
            format!("columns must be {} in that order", expected.join(",")),
        ));
    }
    let mut draws = Vec::new();
    let mut log_kernel = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let values: Vec<f64> = record
            .iter()
            .enumerate()
            .map(|(col, f)| {
                f.parse().map_err(|_| {
                    CliError::parse(path, format!("line {line}, column {}", col + 1), format!("'{f}' is not a number"))
                })
            })
            .collect::<CliResult<_>>()?;
        let loadings = Matrix::from_vec(p, m, values[..p * m].to_vec());
        let psi = values[p * m..p * m + p].to_vec();
        let mut phi = Matrix::identity(m);
        let mut k = p * m + p;
        for a in 0..m {
            for b in (a + 1)..m {
                phi[(a, b)] = values[k];
                phi[(b, a)] = values[k];
                k += 1;
            }
        }
        let model = FactorModel::new(loadings, psi, phi)
            .map_err(|e| CliError::parse(path, format!("line {line}"), e.to_string()))?;
        draws.push(model);
        log_kernel.push(values[k]);
    }
    Ok(DrawFile { p, m, draws, log_kernel })
}

/// Histogram of one parameter: `edges.len() == counts.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub parameter: String,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over the observed range; the last bin is closed so every
/// value is counted exactly once.
pub fn histogram(parameter: &str, values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Histogram { parameter: parameter.to_string(), edges: vec![0.0, 0.0], counts: vec![0] };
    }
    if !(hi > lo) {
        return Histogram { parameter: parameter.to_string(), edges: vec![lo, hi], counts: vec![values.len()] };
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| if b == bins { hi } else { lo + width * b as f64 }).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram { parameter: parameter.to_string(), edges, counts }
}

/// Histograms of every loading cell that is not fixed, pooled over chains.
pub fn loading_histograms(chains: &[Chain], bins: usize) -> Vec<Histogram> {
    let Some(first) = chains.first() else { return Vec::new() };
    let pattern = first.pattern();
    let mut out = Vec::new();
    for i in 0..pattern.p() {
        for j in 0..pattern.m() {
            if !pattern.get(i, j).is_free() {
                continue;
            }
            let values: Vec<f64> = chains.iter().flat_map(|c| c.loading_trace(i, j)).collect();
            out.push(histogram(&format!("L[{},{}]", i + 1, j + 1), &values, bins));
        }
    }
    out
}

/// `parameter,bin,lower,upper,count`, one row per bin.
pub fn format_histograms(hists: &[Histogram]) -> String {
    let header = ["parameter", "bin", "lower", "upper", "count"].map(String::from).to_vec();
    let rows = hists.iter().flat_map(|h| {
        h.counts.iter().enumerate().map(move |(b, count)| {
            vec![h.parameter.clone(), (b + 1).to_string(), format!("{}", h.edges[b]), format!("{}", h.edges[b + 1]), count.to_string()]
        })
    });
    csv_string(std::iter::once(header).chain(rows))
}
