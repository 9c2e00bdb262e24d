//! Full conditionals of the score-augmented factor model.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::model::{row_quad, CellStatus, FactorModel};
use crate::stats::{self, SimRng};

/// Normal full conditional of the factor scores of one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConditional {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

/// Precision `Φ⁻¹ + ΛᵀΨ⁻¹Λ` of the score conditional, shared by all observations.
pub(crate) fn score_precision(model: &FactorModel) -> Result<Matrix> {
    let (p, m) = (model.p(), model.m());
    let phi_inv = Cholesky::new(&model.factor_correlations)?.inverse();
    let mut prec = phi_inv;
    for i in 0..p {
        let w = 1.0 / model.unique_variances[i];
        let row = model.loadings.row(i);
        for a in 0..m {
            for b in 0..m {
                prec[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    prec.symmetrize();
    Ok(prec)
}

/// `V = (Φ⁻¹ + ΛᵀΨ⁻¹Λ)⁻¹`, mean `VΛᵀΨ⁻¹y`.
pub fn factor_score_conditional(model: &FactorModel, observation: &[f64]) -> Result<ScoreConditional> {
    if observation.len() != model.p() {
        return Err(Error::Dimension("observation length differs from item count".into()));
    }
    let m = model.m();
    let chol = Cholesky::new(&score_precision(model)?)?;
    let mut b = alloc::vec![0.0; m];
    for (i, &y) in observation.iter().enumerate() {
        let w = y / model.unique_variances[i];
        for (bj, &l) in b.iter_mut().zip(model.loadings.row(i)) {
            *bj += w * l;
        }
    }
    Ok(ScoreConditional { mean: chol.solve(&b), covariance: chol.inverse() })
}

/// Normal conditional of the free cells of one loading row, given the scores.
#[derive(Debug, Clone)]
pub struct RowConditional {
    /// Column indices of the free cells, ascending.
    pub free: Vec<usize>,
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub(crate) cov_chol: Cholesky,
}

impl RowConditional {
    pub fn ln_density(&self, x: &[f64]) -> f64 {
        stats::mvn_ln_pdf(x, &self.mean, &self.cov_chol)
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        stats::mvn_sample(rng, &self.mean, &self.cov_chol)
    }

    /// Conditional of the remaining cells given the cell at position `k` of `free`.
    pub(crate) fn given_one(&self, k: usize, value: f64) -> (Vec<usize>, Vec<f64>, Matrix) {
        let d = self.free.len();
        let rest: Vec<usize> = (0..d).filter(|&a| a != k).collect();
        let ckk = self.covariance[(k, k)];
        let shift = value - self.mean[k];
        let mean = rest.iter().map(|&a| self.mean[a] + self.covariance[(a, k)] / ckk * shift).collect();
        let mut cov = Matrix::zeros(rest.len(), rest.len());
        for (r, &a) in rest.iter().enumerate() {
            for (s, &b) in rest.iter().enumerate() {
                cov[(r, s)] = self.covariance[(a, b)] - self.covariance[(a, k)] * self.covariance[(b, k)] / ckk;
            }
        }
        cov.symmetrize();
        (rest, mean, cov)
    }
}

/// Builds the row conditional from score cross-products.
///
/// `ftf` is `FᵀF` (m × m), `fty` is `Fᵀy` for this item's data column.
/// Fixed cells shift the response; `prior_precision` is added on the diagonal
/// of the free block (zero for the flat prior).
pub(crate) fn row_conditional_from_stats(
    row: usize,
    pattern_row: &[CellStatus],
    ftf: &Matrix,
    fty: &[f64],
    psi: f64,
    prior_precision: f64,
) -> Result<RowConditional> {
    let free: Vec<usize> = (0..pattern_row.len()).filter(|&j| pattern_row[j].is_free()).collect();
    let fixed: Vec<(usize, f64)> =
        (0..pattern_row.len()).filter_map(|j| pattern_row[j].fixed_value().map(|c| (j, c))).collect();
    let d = free.len();
    let mut prec = Matrix::zeros(d, d);
    let mut b = alloc::vec![0.0; d];
    for (a, &ja) in free.iter().enumerate() {
        for (c, &jc) in free.iter().enumerate() {
            prec[(a, c)] = ftf[(ja, jc)] / psi;
        }
        prec[(a, a)] += prior_precision;
        let mut r = fty[ja];
        for &(jf, val) in &fixed {
            r -= ftf[(ja, jf)] * val;
        }
        b[a] = r / psi;
    }
    let prec_chol = Cholesky::new(&prec).map_err(|_| Error::DegenerateConditional { row })?;
    let mean = prec_chol.solve(&b);
    let covariance = prec_chol.inverse();
    let cov_chol = Cholesky::new(&covariance).map_err(|_| Error::DegenerateConditional { row })?;
    if !mean.iter().all(|x| x.is_finite()) {
        return Err(Error::DegenerateConditional { row });
    }
    Ok(RowConditional { free, mean, covariance, cov_chol })
}

/// Conditional of the free cells of loading row `row_index`, given the factor scores.
///
/// `prior_precision` is zero for the flat prior and `1/v` for a `N(0, v)` loading prior.
pub fn loading_row_conditional(
    row_index: usize,
    pattern_row: &[CellStatus],
    factor_scores: &Matrix,
    psi_i: f64,
    data_column: &[f64],
    prior_precision: f64,
) -> Result<RowConditional> {
    if factor_scores.rows() != data_column.len() || factor_scores.cols() != pattern_row.len() {
        return Err(Error::Dimension("scores, data column and pattern row disagree".into()));
    }
    let ftf = factor_scores.t_matmul(factor_scores);
    let m = factor_scores.cols();
    let mut fty = alloc::vec![0.0; m];
    for (t, &y) in data_column.iter().enumerate() {
        for (acc, &f) in fty.iter_mut().zip(factor_scores.row(t)) {
            *acc += f * y;
        }
    }
    row_conditional_from_stats(row_index, pattern_row, &ftf, &fty, psi_i, prior_precision)
}

/// The section of the communality ball `{λ : λᵀΦλ ≤ 1}` through the fixed cells of a row,
/// as an ellipsoid in the free coordinates: `(x − center)ᵀ Φ_SS (x − center) ≤ radius²`.
#[derive(Debug, Clone)]
pub struct BallSection {
    pub free: Vec<usize>,
    pub center: Vec<f64>,
    pub radius_sq: f64,
    shape_chol: Cholesky,
}

impl BallSection {
    /// `None` when the fixed cells alone already leave the ball.
    pub fn new(pattern_row: &[CellStatus], phi: &Matrix) -> Option<Self> {
        let m = pattern_row.len();
        let free: Vec<usize> = (0..m).filter(|&j| pattern_row[j].is_free()).collect();
        let fixed: Vec<(usize, f64)> =
            (0..m).filter_map(|j| pattern_row[j].fixed_value().map(|c| (j, c))).collect();
        let mut c_full = alloc::vec![0.0; m];
        for &(j, c) in &fixed {
            c_full[j] = c;
        }
        let fixed_q = row_quad(&c_full, phi);
        if free.is_empty() {
            return if fixed_q <= 1.0 {
                Some(BallSection {
                    free,
                    center: Vec::new(),
                    radius_sq: 1.0 - fixed_q,
                    shape_chol: Cholesky::new(&Matrix::zeros(0, 0)).ok()?,
                })
            } else {
                None
            };
        }
        let shape = phi.select(&free, &free);
        let shape_chol = Cholesky::new(&shape).ok()?;
        // cross term Φ_SF c
        let cross: Vec<f64> =
            free.iter().map(|&a| fixed.iter().map(|&(j, c)| phi[(a, j)] * c).sum::<f64>()).collect();
        let center: Vec<f64> = shape_chol.solve(&cross).into_iter().map(|x| -x).collect();
        let radius_sq = 1.0 - fixed_q + shape_chol.inv_quad(&cross);
        if !(radius_sq > 0.0) {
            return None;
        }
        Some(BallSection { free, center, radius_sq, shape_chol })
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    /// Log Lebesgue volume of the section in the free coordinates.
    pub fn ln_volume(&self) -> f64 {
        let d = self.dim() as f64;
        if self.dim() == 0 {
            return 0.0;
        }
        let ln_unit_ball = 0.5 * d * libm::log(core::f64::consts::PI) - stats::ln_gamma(0.5 * d + 1.0);
        ln_unit_ball + 0.5 * d * libm::log(self.radius_sq) - 0.5 * self.shape_chol.log_det()
    }

    /// Uniform draw from the section.
    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        let d = self.dim();
        let mut u = stats::uniform_in_unit_ball(rng, d);
        let r = libm::sqrt(self.radius_sq);
        u.iter_mut().for_each(|x| *x *= r);
        // x = center + L⁻ᵀ u gives (x−c)ᵀ L Lᵀ (x−c) = |u|²
        self.shape_chol.solve_upper_in_place(&mut u);
        u.iter().zip(&self.center).map(|(a, c)| a + c).collect()
    }
}

/// Whether a full loading row lies in the closed communality ball.
#[inline]
pub fn in_ball(row: &[f64], phi: &Matrix) -> bool {
    row_quad(row, phi) <= 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_loadings_recover_prior() {
        let phi = Matrix::from_rows(&[[1.0, 0.3], [0.3, 1.0]]);
        let model = FactorModel::new(Matrix::zeros(3, 2), vec![1.0, 2.0, 0.5], phi.clone()).unwrap();
        let c = factor_score_conditional(&model, &[0.4, -1.0, 2.0]).unwrap();
        assert!(c.mean.iter().all(|x| x.abs() < 1e-15));
        assert!(c.covariance.max_abs_diff(&phi) < 1e-12);
    }

    #[test]
    fn scalar_score_conditional() {
        let model = FactorModel::orthogonal(Matrix::from_rows(&[[1.0]]), vec![1.0]).unwrap();
        let c = factor_score_conditional(&model, &[2.0]).unwrap();
        assert!((c.mean[0] - 1.0).abs() < 1e-15);
        assert!((c.covariance[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn score_conditional_matches_scalar_loops() {
        let model = FactorModel::new(
            Matrix::from_rows(&[[0.8, 0.1], [0.4, 0.5], [-0.2, 0.7], [0.3, 0.0]]),
            vec![0.3, 0.5, 0.4, 0.9],
            Matrix::from_rows(&[[1.0, -0.2], [-0.2, 1.0]]),
        )
        .unwrap();
        let y = [0.5, -0.3, 1.1, 0.2];
        let got = factor_score_conditional(&model, &y).unwrap();
        // 2x2 by hand: precision = Φ⁻¹ + Σ λλᵀ/ψ, covariance = its inverse
        let det_phi = 1.0 - 0.04;
        let mut p = [[1.0 / det_phi, 0.2 / det_phi], [0.2 / det_phi, 1.0 / det_phi]];
        let mut b = [0.0, 0.0];
        for i in 0..4 {
            let l = model.loadings.row(i);
            let w = 1.0 / model.unique_variances[i];
            for a in 0..2 {
                b[a] += w * l[a] * y[i];
                for c in 0..2 {
                    p[a][c] += w * l[a] * l[c];
                }
            }
        }
        let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        let v = [[p[1][1] / det, -p[0][1] / det], [-p[1][0] / det, p[0][0] / det]];
        let mean = [v[0][0] * b[0] + v[0][1] * b[1], v[1][0] * b[0] + v[1][1] * b[1]];
        for a in 0..2 {
            assert!((got.mean[a] - mean[a]).abs() < 1e-12);
            for c in 0..2 {
                assert!((got.covariance[(a, c)] - v[a][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn intercept_regression() {
        let n = 8;
        let scores = Matrix::from_vec(n, 1, vec![1.0; n]);
        let col: Vec<f64> = (0..n).map(|t| 0.1 * t as f64).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let c = loading_row_conditional(0, &[CellStatus::Free], &scores, 1.0, &col, 0.0).unwrap();
        assert!((c.mean[0] - mean).abs() < 1e-14);
        assert!((c.covariance[(0, 0)] - 1.0 / n as f64).abs() < 1e-14);
    }

    #[test]
    fn fixed_value_shifts_by_regression() {
        // Two score columns; cell 2 fixed at c. Oracle: regress (y − c·f2) on f1.
        let f = Matrix::from_rows(&[[1.0, 0.5], [0.2, -1.0], [-0.7, 0.3], [1.5, 0.8], [0.1, -0.2]]);
        let y = [0.9, -0.4, 0.2, 1.7, 0.0];
        let c = 0.6;
        let pattern = [CellStatus::Free, CellStatus::FixedValue(c)];
        let got = loading_row_conditional(0, &pattern, &f, 0.5, &y, 0.0).unwrap();
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for t in 0..5 {
            let r = y[t] - c * f[(t, 1)];
            sxx += f[(t, 0)] * f[(t, 0)];
            sxy += f[(t, 0)] * r;
        }
        assert!((got.mean[0] - sxy / sxx).abs() < 1e-12);
        assert!((got.covariance[(0, 0)] - 0.5 / sxx).abs() < 1e-12);
        let free = loading_row_conditional(0, &[CellStatus::Free, CellStatus::FixedZero], &f, 0.5, &y, 0.0).unwrap();
        let mut sxz = 0.0;
        for t in 0..5 {
            sxz += f[(t, 0)] * f[(t, 1)];
        }
        assert!(((free.mean[0] - got.mean[0]) - c * sxz / sxx).abs() < 1e-12);
    }

    #[test]
    fn vague_limit_matches_flat() {
        let f = Matrix::from_rows(&[[1.0, 0.5], [0.2, -1.0], [-0.7, 0.3], [1.5, 0.8]]);
        let y = [0.9, -0.4, 0.2, 1.7];
        let pattern = [CellStatus::Free, CellStatus::Free];
        let flat = loading_row_conditional(0, &pattern, &f, 0.7, &y, 0.0).unwrap();
        let vague = loading_row_conditional(0, &pattern, &f, 0.7, &y, 1e-12).unwrap();
        for a in 0..2 {
            assert!((flat.mean[a] - vague.mean[a]).abs() < 1e-8);
            for b in 0..2 {
                assert!((flat.covariance[(a, b)] - vague.covariance[(a, b)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn collinear_scores_are_degenerate() {
        let f = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [-1.0, -2.0]]);
        let err = loading_row_conditional(3, &[CellStatus::Free, CellStatus::Free], &f, 1.0, &[0.1, 0.2, 0.3], 0.0)
            .unwrap_err();
        assert_eq!(err, Error::DegenerateConditional { row: 3 });
    }

    #[test]
    fn ball_section_geometry() {
        let phi = Matrix::identity(2);
        let s = BallSection::new(&[CellStatus::Free, CellStatus::FixedValue(0.6)], &phi).unwrap();
        assert!((s.radius_sq - 0.64).abs() < 1e-14);
        assert!((s.ln_volume() - libm::log(1.6)).abs() < 1e-12);
        let full = BallSection::new(&[CellStatus::Free, CellStatus::Free], &phi).unwrap();
        assert!((full.ln_volume() - libm::log(core::f64::consts::PI)).abs() < 1e-12);
        let mut rng = crate::stats::rng_from_seed(3);
        let oblique = Matrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]);
        let sec = BallSection::new(&[CellStatus::Free, CellStatus::Free], &oblique).unwrap();
        for _ in 0..1000 {
            let x = sec.sample(&mut rng);
            assert!(in_ball(&x, &oblique));
        }
    }
}
