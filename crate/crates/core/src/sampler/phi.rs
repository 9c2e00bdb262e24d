//! Coordinate-wise full conditionals of the factor correlations.
//!
//! Each off-diagonal correlation is updated on its own, given the others and
//! the factor scores. The conditional is a one-dimensional density on the
//! interval that keeps `Φ` positive definite (and, under the uniform-ball
//! prior, keeps every loading row inside its communality ball), so it can be
//! both slice-sampled and normalized by quadrature.

use alloc::vec::Vec;

use crate::linalg::{Cholesky, Matrix};
use crate::model::{row_quad, PatternMatrix};
use crate::sampler::conditional::BallSection;
use crate::sampler::slice::slice_step;
use crate::stats::SimRng;

/// Off-diagonal coordinates `(j, k)`, `j < k`, in the order they are updated.
pub fn correlation_pairs(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..m {
        for k in (j + 1)..m {
            out.push((j, k));
        }
    }
    out
}

fn with_rho(phi: &Matrix, j: usize, k: usize, rho: f64) -> Matrix {
    let mut out = phi.clone();
    out[(j, k)] = rho;
    out[(k, j)] = rho;
    out
}

fn det_small(a: &Matrix) -> f64 {
    // Gaussian elimination with partial pivoting; matrices here are m × m with small m.
    let n = a.rows();
    let mut m = a.clone();
    let mut det = 1.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| m[(x, c)].abs().partial_cmp(&m[(y, c)].abs()).unwrap()).unwrap();
        if m[(piv, c)] == 0.0 {
            return 0.0;
        }
        if piv != c {
            for t in 0..n {
                let tmp = m[(c, t)];
                m[(c, t)] = m[(piv, t)];
                m[(piv, t)] = tmp;
            }
            det = -det;
        }
        det *= m[(c, c)];
        for r in (c + 1)..n {
            let f = m[(r, c)] / m[(c, c)];
            for t in c..n {
                m[(r, t)] -= f * m[(c, t)];
            }
        }
    }
    det
}

/// Context shared by the conditional of one correlation coordinate.
pub(crate) struct CorrelationConditional<'a> {
    pub phi: &'a Matrix,
    pub j: usize,
    pub k: usize,
    pub ftf: &'a Matrix,
    pub n: usize,
    /// Loadings and pattern when the uniform-ball prior is active.
    pub ball: Option<(&'a Matrix, &'a PatternMatrix)>,
}

impl CorrelationConditional<'_> {
    /// Open interval of `ρ_jk` values keeping `Φ` PD and (if active) all rows in their balls.
    pub fn feasible_interval(&self) -> (f64, f64) {
        let (j, k) = (self.j, self.k);
        let r0 = self.phi[(j, k)];
        // det(Φ(ρ)) is quadratic in ρ; recover it from three evaluations
        let d = |r: f64| det_small(&with_rho(self.phi, j, k, r));
        let (dm, d0, dp) = (d(-1.0), d(0.0), d(1.0));
        let c2 = 0.5 * (dp + dm) - d0;
        let c1 = 0.5 * (dp - dm);
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        if c2.abs() > 1e-300 {
            let disc = c1 * c1 - 4.0 * c2 * d0;
            if disc > 0.0 {
                let s = libm::sqrt(disc);
                let (a, b) = ((-c1 - s) / (2.0 * c2), (-c1 + s) / (2.0 * c2));
                let (r1, r2) = if a < b { (a, b) } else { (b, a) };
                lo = lo.max(r1);
                hi = hi.min(r2);
            }
        }
        if let Some((loadings, _)) = self.ball {
            for i in 0..loadings.rows() {
                let row = loadings.row(i);
                let q0 = row_quad(row, self.phi);
                let slope = 2.0 * row[j] * row[k];
                if slope > 0.0 {
                    hi = hi.min(r0 + (1.0 - q0) / slope);
                } else if slope < 0.0 {
                    lo = lo.max(r0 + (1.0 - q0) / slope);
                }
            }
        }
        (lo, hi)
    }

    /// Unnormalized log conditional density of `ρ_jk`.
    pub fn ln_density(&self, rho: f64) -> f64 {
        let phi = with_rho(self.phi, self.j, self.k, rho);
        let chol = match Cholesky::new(&phi) {
            Ok(c) => c,
            Err(_) => return f64::NEG_INFINITY,
        };
        let inv = chol.inverse();
        let m = phi.rows();
        let mut tr = 0.0;
        for a in 0..m {
            for b in 0..m {
                tr += inv[(a, b)] * self.ftf[(b, a)];
            }
        }
        let mut out = -0.5 * self.n as f64 * chol.log_det() - 0.5 * tr;
        if let Some((loadings, pattern)) = self.ball {
            for i in 0..loadings.rows() {
                if !crate::sampler::conditional::in_ball(loadings.row(i), &phi) {
                    return f64::NEG_INFINITY;
                }
                match BallSection::new(pattern.row(i), &phi) {
                    Some(sec) => out -= sec.ln_volume(),
                    None => return f64::NEG_INFINITY,
                }
            }
        }
        out
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        let (lo, hi) = self.feasible_interval();
        let r0 = self.phi[(self.j, self.k)];
        slice_step(rng, r0, lo, hi, 0.1, |r| self.ln_density(r))
    }

    /// Normalized log density at `rho`, with the normalizer by adaptive quadrature.
    pub fn ln_normalized_density(&self, rho: f64) -> f64 {
        let (lo, hi) = self.feasible_interval();
        if !(rho > lo && rho < hi) {
            return f64::NEG_INFINITY;
        }
        // locate the peak for scaling
        let (mut a, mut b) = (lo, hi);
        let g = 0.5 * (libm::sqrt(5.0) - 1.0);
        for _ in 0..100 {
            let x1 = b - g * (b - a);
            let x2 = a + g * (b - a);
            if self.ln_density(x1) < self.ln_density(x2) {
                a = x1;
            } else {
                b = x2;
            }
        }
        let peak_at = 0.5 * (a + b);
        let peak = self.ln_density(peak_at).max(self.ln_density(rho));
        let f = |x: f64| {
            let v = self.ln_density(x) - peak;
            if v.is_finite() { libm::exp(v) } else { 0.0 }
        };
        let integral = adaptive_simpson(&f, lo, peak_at, 1e-12, 40) + adaptive_simpson(&f, peak_at, hi, 1e-12, 40);
        self.ln_density(rho) - peak - libm::log(integral)
    }
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    // start from a moderately fine grid so narrow peaks are not missed
    let panels = 32;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (f0, f1, fm) = (f(x0), f(x1), f(0.5 * (x0 + x1)));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            simpson_rec(f, x0, x1, f0, fm, f1, whole, tol / panels as f64, depth)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_of_two_by_two() {
        let phi = Matrix::from_rows(&[[1.0, 0.2], [0.2, 1.0]]);
        let ftf = Matrix::identity(2);
        let c = CorrelationConditional { phi: &phi, j: 0, k: 1, ftf: &ftf, n: 1, ball: None };
        let (lo, hi) = c.feasible_interval();
        assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interval_of_three_by_three() {
        let phi = Matrix::from_rows(&[[1.0, 0.5, 0.5], [0.5, 1.0, 0.0], [0.5, 0.0, 1.0]]);
        let ftf = Matrix::identity(3);
        let c = CorrelationConditional { phi: &phi, j: 1, k: 2, ftf: &ftf, n: 1, ball: None };
        let (lo, hi) = c.feasible_interval();
        // det = 1 - 0.5 - ρ² + 0.5ρ... solve directly
        let det = |r: f64| det_small(&with_rho(&phi, 1, 2, r));
        assert!(det(lo).abs() < 1e-10 && det(hi).abs() < 1e-10);
        assert!(det(0.5 * (lo + hi)) > 0.0);
    }

    #[test]
    fn normalized_density_integrates_to_one() {
        let phi = Matrix::from_rows(&[[1.0, 0.1, 0.3], [0.1, 1.0, -0.2], [0.3, -0.2, 1.0]]);
        let ftf = Matrix::from_rows(&[[40.0, 8.0, 10.0], [8.0, 35.0, -5.0], [10.0, -5.0, 50.0]]);
        let c = CorrelationConditional { phi: &phi, j: 0, k: 2, ftf: &ftf, n: 40, ball: None };
        let (lo, hi) = c.feasible_interval();
        let n = 4_000;
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 1..n {
            acc += libm::exp(c.ln_normalized_density(lo + i as f64 * h));
        }
        assert!((acc * h - 1.0).abs() < 1e-4, "{}", acc * h);
    }
}
