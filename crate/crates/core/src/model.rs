//! Factor-model domain types, implied covariance, likelihood, standardization
//! and synthetic data generation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, Cholesky, Matrix};
use crate::stats::{rng_from_seed, std_normal_vec, LN_2PI};

/// Observations (rows) by items (columns).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    values: Matrix,
    item_names: Vec<String>,
    standardized: bool,
}

impl Dataset {
    /// Validates shape and finiteness. The standardized flag is only set by [`standardize`]
    /// or by a caller that has already checked the moments.
    pub fn new(values: Matrix, item_names: Vec<String>) -> Result<Self> {
        if values.rows() < 2 {
            return Err(Error::InvalidData(format!("need at least 2 observations, got {}", values.rows())));
        }
        if values.cols() < 1 {
            return Err(Error::InvalidData("need at least one item".into()));
        }
        if item_names.len() != values.cols() {
            return Err(Error::InvalidData(format!(
                "{} item names for {} columns",
                item_names.len(),
                values.cols()
            )));
        }
        if let Some(pos) = values.as_slice().iter().position(|x| !x.is_finite()) {
            let (r, c) = (pos / values.cols(), pos % values.cols());
            return Err(Error::InvalidData(format!(
                "missing or non-finite value at observation {}, item '{}'",
                r + 1,
                item_names[c]
            )));
        }
        let standardized = is_standardized(&values);
        Ok(Dataset { values, item_names, standardized })
    }

    pub fn with_default_names(values: Matrix) -> Result<Self> {
        let names = (1..=values.cols()).map(|j| format!("y{j}")).collect();
        Dataset::new(values, names)
    }

    #[inline]
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.values.cols()
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Subset of observations, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let cols: Vec<usize> = (0..self.p()).collect();
        let values = self.values.select(rows, &cols);
        let mut out = Dataset::new(values, self.item_names.clone())?;
        // A subsample of standardized data is centred by construction of the full data,
        // not by its own moments; keep the provenance flag.
        out.standardized = self.standardized;
        Ok(out)
    }

    /// Cross-product matrix `YᵀY`.
    pub fn scatter(&self) -> Matrix {
        let mut s = self.values.t_matmul(&self.values);
        s.symmetrize();
        s
    }

    /// Sample covariance about the column means (divisor `n − 1`).
    pub fn sample_covariance(&self) -> Matrix {
        let (n, p) = (self.n(), self.p());
        let means: Vec<f64> = (0..p).map(|j| self.values.column(j).iter().sum::<f64>() / n as f64).collect();
        let mut cov = Matrix::zeros(p, p);
        for r in 0..n {
            let row = self.values.row(r);
            for a in 0..p {
                for b in a..p {
                    cov[(a, b)] += (row[a] - means[a]) * (row[b] - means[b]);
                }
            }
        }
        for a in 0..p {
            for b in a..p {
                let v = cov[(a, b)] / (n as f64 - 1.0);
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        cov
    }
}

fn is_standardized(values: &Matrix) -> bool {
    let n = values.rows() as f64;
    (0..values.cols()).all(|j| {
        let col = values.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        mean.abs() < 1e-10 && (var - 1.0).abs() < 1e-8
    })
}

/// Status of one loading cell in a pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CellStatus {
    Free,
    FixedZero,
    FixedValue(f64),
    /// Free, with the added restriction `λ > 0`; identifies the sign of its column.
    PositiveAnchor,
}

impl CellStatus {
    #[inline]
    pub fn is_free(self) -> bool {
        matches!(self, CellStatus::Free | CellStatus::PositiveAnchor)
    }

    /// Value of a fixed cell, `None` for free cells.
    #[inline]
    pub fn fixed_value(self) -> Option<f64> {
        match self {
            CellStatus::FixedZero => Some(0.0),
            CellStatus::FixedValue(c) => Some(c),
            _ => None,
        }
    }
}

/// Per-cell status grid for a `p × m` loadings matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatternMatrix {
    p: usize,
    m: usize,
    cells: Vec<CellStatus>,
}

impl PatternMatrix {
    pub fn new(p: usize, m: usize, cells: Vec<CellStatus>) -> Result<Self> {
        if cells.len() != p * m {
            return Err(Error::Dimension(format!("pattern has {} cells, expected {}x{}", cells.len(), p, m)));
        }
        let pat = PatternMatrix { p, m, cells };
        for j in 0..m {
            let anchors = (0..p).filter(|&i| pat.get(i, j) == CellStatus::PositiveAnchor).count();
            if anchors > 1 {
                return Err(Error::InvalidModel(format!("column {} has {} positive anchors", j + 1, anchors)));
            }
        }
        Ok(pat)
    }

    pub fn from_rows(rows: &[Vec<CellStatus>]) -> Result<Self> {
        let p = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("ragged pattern rows".into()));
        }
        PatternMatrix::new(p, m, rows.iter().flatten().copied().collect())
    }

    pub fn all_free(p: usize, m: usize) -> Self {
        PatternMatrix { p, m, cells: alloc::vec![CellStatus::Free; p * m] }
    }

    /// Orthogonal EFA layout in echelon form: leader row `leaders[j]` carries the
    /// positive anchor of column `j` and is fixed at zero in every later column.
    /// These are exactly the `m(m−1)/2` restrictions that remove rotational freedom.
    pub fn efa_echelon(p: usize, leaders: &[usize]) -> Result<Self> {
        let m = leaders.len();
        let mut cells = alloc::vec![CellStatus::Free; p * m];
        for (j, &r) in leaders.iter().enumerate() {
            if r >= p {
                return Err(Error::Dimension(format!("leader row {} out of range for p = {}", r + 1, p)));
            }
            if leaders[..j].contains(&r) {
                return Err(Error::InvalidModel(format!("leader row {} used twice", r + 1)));
            }
            cells[r * m + j] = CellStatus::PositiveAnchor;
            for k in (j + 1)..m {
                cells[r * m + k] = CellStatus::FixedZero;
            }
        }
        Ok(PatternMatrix { p, m, cells })
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> CellStatus {
        self.cells[i * self.m + j]
    }

    pub fn set(&mut self, i: usize, j: usize, status: CellStatus) {
        self.cells[i * self.m + j] = status;
    }

    pub fn cells(&self) -> &[CellStatus] {
        &self.cells
    }

    pub fn row(&self, i: usize) -> &[CellStatus] {
        &self.cells[i * self.m..(i + 1) * self.m]
    }

    pub fn free_in_row(&self, i: usize) -> Vec<usize> {
        (0..self.m).filter(|&j| self.get(i, j).is_free()).collect()
    }

    pub fn fixed_in_row(&self, i: usize) -> Vec<(usize, f64)> {
        (0..self.m).filter_map(|j| self.get(i, j).fixed_value().map(|c| (j, c))).collect()
    }

    pub fn anchor_row(&self, j: usize) -> Option<usize> {
        (0..self.p).find(|&i| self.get(i, j) == CellStatus::PositiveAnchor)
    }

    pub fn n_free(&self) -> usize {
        self.cells.iter().filter(|c| c.is_free()).count()
    }

    /// Whether a loadings matrix respects every fixed cell exactly and every anchor strictly.
    pub fn admits(&self, loadings: &Matrix) -> bool {
        if loadings.rows() != self.p || loadings.cols() != self.m {
            return false;
        }
        (0..self.p).all(|i| {
            (0..self.m).all(|j| match self.get(i, j) {
                CellStatus::Free => true,
                CellStatus::PositiveAnchor => loadings[(i, j)] > 0.0,
                CellStatus::FixedZero => loadings[(i, j)] == 0.0,
                CellStatus::FixedValue(c) => loadings[(i, j)] == c,
            })
        })
    }

    /// Writes the fixed values into a loadings matrix.
    pub fn impose_fixed(&self, loadings: &mut Matrix) {
        for i in 0..self.p {
            for j in 0..self.m {
                if let Some(c) = self.get(i, j).fixed_value() {
                    loadings[(i, j)] = c;
                }
            }
        }
    }
}

/// One point in the factor-model parameter space.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FactorModel {
    pub loadings: Matrix,
    pub unique_variances: Vec<f64>,
    pub factor_correlations: Matrix,
}

impl FactorModel {
    pub fn new(loadings: Matrix, unique_variances: Vec<f64>, factor_correlations: Matrix) -> Result<Self> {
        let model = FactorModel { loadings, unique_variances, factor_correlations };
        model.validate()?;
        Ok(model)
    }

    /// Orthogonal model (`Φ = I`).
    pub fn orthogonal(loadings: Matrix, unique_variances: Vec<f64>) -> Result<Self> {
        let m = loadings.cols();
        FactorModel::new(loadings, unique_variances, Matrix::identity(m))
    }

    pub fn validate(&self) -> Result<()> {
        let (p, m) = (self.loadings.rows(), self.loadings.cols());
        if self.unique_variances.len() != p {
            return Err(Error::Dimension(format!("{} unique variances for {} items", self.unique_variances.len(), p)));
        }
        if self.factor_correlations.rows() != m || self.factor_correlations.cols() != m {
            return Err(Error::Dimension(format!("factor correlations must be {m}x{m}")));
        }
        if !self.loadings.is_finite() {
            return Err(Error::InvalidModel("non-finite loadings".into()));
        }
        if let Some(i) = self.unique_variances.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidModel(format!("unique variance of item {} must be positive", i + 1)));
        }
        let phi = &self.factor_correlations;
        for a in 0..m {
            if (phi[(a, a)] - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidModel("factor correlations need a unit diagonal".into()));
            }
            for b in 0..a {
                if (phi[(a, b)] - phi[(b, a)]).abs() > 1e-12 {
                    return Err(Error::InvalidModel("factor correlations must be symmetric".into()));
                }
            }
        }
        if m > 0 && !(min_eigenvalue(phi) > 0.0) {
            return Err(Error::InvalidModel("factor correlations must be positive definite".into()));
        }
        Cholesky::new(&implied_covariance(self)).map(|_| ()).map_err(|_| Error::NotPositiveDefinite)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.loadings.rows()
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.loadings.cols()
    }

    /// Communality of each item on the standardized scale, `λᵢᵀΦλᵢ`.
    pub fn communalities(&self) -> Vec<f64> {
        (0..self.p()).map(|i| row_quad(self.loadings.row(i), &self.factor_correlations)).collect()
    }
}

/// `xᵀ A x`.
pub fn row_quad(x: &[f64], a: &Matrix) -> f64 {
    let m = x.len();
    let mut acc = 0.0;
    for j in 0..m {
        for k in 0..m {
            acc += x[j] * a[(j, k)] * x[k];
        }
    }
    acc
}

/// Parameters of a simulation: the generating model, sample size and seed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrueModelSpec {
    pub model: FactorModel,
    pub n: usize,
    pub seed: u64,
}

impl TrueModelSpec {
    pub fn new(model: FactorModel, n: usize, seed: u64) -> Result<Self> {
        model.validate()?;
        if n < 2 {
            return Err(Error::InvalidConfig(format!("simulation needs n >= 2, got {n}")));
        }
        Ok(TrueModelSpec { model, n, seed })
    }
}

/// `ΛΦΛᵀ + Ψ`, exactly symmetric.
pub fn implied_covariance(model: &FactorModel) -> Matrix {
    let lp = model.loadings.matmul(&model.factor_correlations);
    let mut sigma = lp.matmul(&model.loadings.transpose());
    for (i, &psi) in model.unique_variances.iter().enumerate() {
        sigma[(i, i)] += psi;
    }
    sigma.symmetrize();
    sigma
}

/// Zero-mean normal log likelihood from the cross-product matrix `YᵀY` of `n` rows.
pub fn log_likelihood_from_scatter(n: usize, scatter: &Matrix, sigma: &Matrix) -> Result<f64> {
    let p = sigma.rows();
    if scatter.rows() != p {
        return Err(Error::Dimension(format!("data has {} items, model has {}", scatter.rows(), p)));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let chol = Cholesky::new(sigma)?;
    let inv = chol.inverse();
    let mut tr = 0.0;
    for a in 0..p {
        for b in 0..p {
            tr += inv[(a, b)] * scatter[(b, a)];
        }
    }
    let nf = n as f64;
    Ok(-0.5 * (nf * (p as f64 * LN_2PI + chol.log_det()) + tr))
}

/// `Σᵢ log N(yᵢ; 0, ΛΦΛᵀ + Ψ)` over the rows of `values` (which may be empty).
pub fn log_likelihood_rows(values: &Matrix, model: &FactorModel) -> Result<f64> {
    let mut scatter = values.t_matmul(values);
    scatter.symmetrize();
    if values.rows() > 0 && values.cols() != model.p() {
        return Err(Error::Dimension(format!("data has {} items, model has {}", values.cols(), model.p())));
    }
    if values.rows() == 0 {
        return Ok(0.0);
    }
    log_likelihood_from_scatter(values.rows(), &scatter, &implied_covariance(model))
}

pub fn log_likelihood(data: &Dataset, model: &FactorModel) -> Result<f64> {
    log_likelihood_rows(data.values(), model)
}

/// Centres and scales every column to mean 0 and variance 1 (divisor `n − 1`).
pub fn standardize(data: &Dataset) -> Result<Dataset> {
    let (n, p) = (data.n(), data.p());
    let mut values = data.values().clone();
    for j in 0..p {
        let col = values.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        if !(var > 0.0) || libm::sqrt(var) <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::ConstantColumn { item: data.item_names()[j].clone() });
        }
        let sd = libm::sqrt(var);
        for i in 0..n {
            values[(i, j)] = (values[(i, j)] - mean) / sd;
        }
    }
    let mut out = Dataset::new(values, data.item_names().to_vec())?;
    out.standardized = true;
    Ok(out)
}

/// Column-centred copy; the analysis path for raw-covariance runs.
pub fn center(data: &Dataset) -> Result<Dataset> {
    let (n, p) = (data.n(), data.p());
    let mut values = data.values().clone();
    for j in 0..p {
        let mean = values.column(j).iter().sum::<f64>() / n as f64;
        for i in 0..n {
            values[(i, j)] -= mean;
        }
    }
    Dataset::new(values, data.item_names().to_vec())
}

/// `n` i.i.d. draws from `N(0, ΛΦΛᵀ + Ψ)`, deterministic in the seed.
pub fn generate_synthetic(spec: &TrueModelSpec) -> Dataset {
    let sigma = implied_covariance(&spec.model);
    let chol = Cholesky::new(&sigma).expect("validated model has a PD implied covariance");
    let p = sigma.rows();
    let mut rng = rng_from_seed(spec.seed);
    let mut values = Matrix::zeros(spec.n, p);
    for r in 0..spec.n {
        let z = std_normal_vec(&mut rng, p);
        values.row_mut(r).copy_from_slice(&chol.mul_lower(&z));
    }
    Dataset::with_default_names(values).expect("simulated data are finite with n >= 2")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar_triple_product(model: &FactorModel) -> Matrix {
        let (p, m) = (model.p(), model.m());
        let mut s = Matrix::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                let mut acc = 0.0;
                for j in 0..m {
                    for k in 0..m {
                        acc += model.loadings[(a, j)] * model.factor_correlations[(j, k)] * model.loadings[(b, k)];
                    }
                }
                if a == b {
                    acc += model.unique_variances[a];
                }
                s[(a, b)] = acc;
            }
        }
        s
    }

    #[test]
    fn zero_loadings_give_diagonal_covariance() {
        let model = FactorModel::orthogonal(Matrix::zeros(3, 2), vec![0.5, 1.0, 2.0]).unwrap();
        assert_eq!(implied_covariance(&model), Matrix::from_diag(&[0.5, 1.0, 2.0]));
    }

    #[test]
    fn one_factor_two_items() {
        let model = FactorModel::orthogonal(Matrix::from_rows(&[[1.0], [1.0]]), vec![1.0, 1.0]).unwrap();
        assert_eq!(implied_covariance(&model), Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]));
    }

    #[test]
    fn oblique_covariance_matches_scalar_loops() {
        let model = FactorModel::new(
            Matrix::from_rows(&[[0.7, 0.1], [0.5, -0.2], [0.0, 0.8], [0.3, 0.3]]),
            vec![0.4, 0.6, 0.3, 0.7],
            Matrix::from_rows(&[[1.0, 0.35], [0.35, 1.0]]),
        )
        .unwrap();
        let got = implied_covariance(&model);
        assert!(got.max_abs_diff(&scalar_triple_product(&model)) < 1e-14);
        assert_eq!(got, got.transpose());
    }

    #[test]
    fn standard_normal_single_observation() {
        let model = FactorModel::orthogonal(Matrix::zeros(1, 0), vec![1.0]).unwrap();
        let ll = log_likelihood_rows(&Matrix::from_rows(&[[0.0]]), &model).unwrap();
        assert!((ll + 0.5 * LN_2PI).abs() < 1e-15);
        assert_eq!(log_likelihood_rows(&Matrix::zeros(0, 1), &model).unwrap(), 0.0);
    }

    #[test]
    fn likelihood_rejects_non_pd_perturbation() {
        let mut model = FactorModel::orthogonal(Matrix::from_rows(&[[0.5], [0.5]]), vec![0.5, 0.5]).unwrap();
        model.unique_variances[0] = -2.0;
        let data = Dataset::with_default_names(Matrix::from_rows(&[[0.1, 0.2], [0.3, -0.1]])).unwrap();
        assert_eq!(log_likelihood(&data, &model), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn standardize_unit_column() {
        let data = Dataset::with_default_names(Matrix::from_rows(&[[1.0], [2.0], [3.0]])).unwrap();
        let z = standardize(&data).unwrap();
        assert!(z.is_standardized());
        let col = z.values().column(0);
        for (got, want) in col.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_column_is_named() {
        let data = Dataset::new(Matrix::from_rows(&[[1.0, 4.0], [2.0, 4.0]]), vec!["a".into(), "waist".into()]).unwrap();
        assert_eq!(standardize(&data), Err(Error::ConstantColumn { item: "waist".into() }));
    }

    #[test]
    fn missing_values_rejected() {
        let err = Dataset::with_default_names(Matrix::from_rows(&[[1.0, f64::NAN], [2.0, 3.0]])).unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
    }

    #[test]
    fn echelon_pattern_layout() {
        let pat = PatternMatrix::efa_echelon(4, &[2, 0]).unwrap();
        assert_eq!(pat.get(2, 0), CellStatus::PositiveAnchor);
        assert_eq!(pat.get(2, 1), CellStatus::FixedZero);
        assert_eq!(pat.get(0, 1), CellStatus::PositiveAnchor);
        assert_eq!(pat.get(0, 0), CellStatus::Free);
        assert_eq!(pat.n_free(), 7);
    }
}
