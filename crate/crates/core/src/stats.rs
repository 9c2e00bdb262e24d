//! Scalar special functions, log densities, seeding and basic random variates.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::linalg::{Cholesky, Matrix};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// The generator used everywhere. ChaCha is portable, so draws are identical across platforms.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a base seed and a path of stream tags.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &tag| splitmix64(acc ^ splitmix64(tag.wrapping_add(0x5851_f42d))))
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + libm::log(var) + d * d / var)
}

/// Log density of the inverse-gamma distribution with the given shape and rate.
pub fn inv_gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * libm::log(rate) - ln_gamma(shape) - (shape + 1.0) * libm::log(x) - rate / x
}

/// Log density of `N(mean, cov)` at `x`, given the Cholesky factor of `cov`.
pub fn mvn_ln_pdf(x: &[f64], mean: &[f64], chol: &Cholesky) -> f64 {
    let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    -0.5 * (x.len() as f64 * LN_2PI + chol.log_det() + chol.inv_quad(&d))
}

/// `log(Σ exp(xs))`, stable; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(xs.iter().map(|x| libm::exp(x - max)).sum::<f64>())
}

/// Log of `2^m · m!`.
pub fn ln_signed_permutations(m: usize) -> f64 {
    m as f64 * core::f64::consts::LN_2 + ln_gamma(m as f64 + 1.0)
}

/// Log volume of the orthogonal group O(m) under the metric in which the
/// upper-triangular entries of a skew-symmetric generator are orthonormal
/// coordinates: `2^m π^{m²/2} / Γ_m(m/2)`.
pub fn ln_orthogonal_group_volume(m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mf = m as f64;
    let ln_pi = libm::log(core::f64::consts::PI);
    mf * core::f64::consts::LN_2 + 0.5 * mf * mf * ln_pi - ln_multivariate_gamma(m, 0.5 * mf)
}

/// `log Γ_m(a)`.
pub fn ln_multivariate_gamma(m: usize, a: f64) -> f64 {
    let mf = m as f64;
    let ln_pi = libm::log(core::f64::consts::PI);
    0.25 * mf * (mf - 1.0) * ln_pi + (0..m).map(|j| ln_gamma(a - 0.5 * j as f64)).sum::<f64>()
}

/// Log volume of the set of `m × m` correlation matrices (the elliptope),
/// i.e. the normalizing constant of the uniform (LKJ, η = 1) prior.
pub fn ln_correlation_volume(m: usize) -> f64 {
    if m < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 1..m {
        let d = (m - k) as f64;
        let b = 0.5 * (d + 1.0);
        acc += d * d * core::f64::consts::LN_2;
        acc += d * (2.0 * ln_gamma(b) - ln_gamma(2.0 * b));
    }
    acc
}

/// `E|X|^k` for `X ~ N(mean, var)` and integer `k ≥ 0`.
pub fn normal_abs_moment(mean: f64, var: f64, k: u32) -> f64 {
    let s = libm::sqrt(var);
    let half = |a: f64| -> f64 {
        // ∫_0^∞ x^j N(x; a, s²) dx by the truncated-moment recurrence.
        let z = a / s;
        let pdf0 = libm::exp(-0.5 * z * z) / libm::sqrt(2.0 * core::f64::consts::PI);
        let m0 = normal_cdf(z);
        if k == 0 {
            return m0;
        }
        let m1 = a * m0 + s * pdf0;
        let (mut prev, mut cur) = (m0, m1);
        for j in 2..=k {
            let next = a * cur + (j as f64 - 1.0) * var * prev;
            prev = cur;
            cur = next;
        }
        cur
    };
    half(mean) + half(-mean)
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn std_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| std_normal(rng)).collect()
}

/// Gamma variate with shape and rate.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("gamma parameters must be positive").sample(rng)
}

pub fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    1.0 / gamma(rng, shape, rate)
}

/// Beta variate via two gammas.
pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let x = gamma(rng, a, 1.0);
    let y = gamma(rng, b, 1.0);
    x / (x + y)
}

/// Uniform point in the unit ball of dimension `d`.
pub fn uniform_in_unit_ball<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    let mut v = std_normal_vec(rng, d);
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    let u: f64 = rng.random();
    let r = libm::pow(u, 1.0 / d as f64) / norm;
    v.iter_mut().for_each(|x| *x *= r);
    v
}

/// Correlation matrix uniform over the set of `m × m` correlation matrices
/// (LKJ with η = 1), by the C-vine construction from partial correlations.
pub fn uniform_correlation_matrix<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Matrix {
    let mut partial = Matrix::zeros(m, m);
    let mut corr = Matrix::identity(m);
    let mut b = 1.0 + 0.5 * (m as f64 - 1.0);
    for k in 0..m.saturating_sub(1) {
        b -= 0.5;
        for i in k + 1..m {
            partial[(k, i)] = 2.0 * beta(rng, b, b) - 1.0;
            let mut r = partial[(k, i)];
            for l in (0..k).rev() {
                r = r * libm::sqrt((1.0 - partial[(l, i)] * partial[(l, i)]) * (1.0 - partial[(l, k)] * partial[(l, k)]))
                    + partial[(l, i)] * partial[(l, k)];
            }
            corr[(k, i)] = r;
            corr[(i, k)] = r;
        }
    }
    corr
}

/// Draw from `N(mean, cov)` given the Cholesky factor of `cov`.
pub fn mvn_sample<R: Rng + ?Sized>(rng: &mut R, mean: &[f64], chol: &Cholesky) -> Vec<f64> {
    let z = std_normal_vec(rng, mean.len());
    let lz = chol.mul_lower(&z);
    mean.iter().zip(lz).map(|(m, e)| m + e).collect()
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
