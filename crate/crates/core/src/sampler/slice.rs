//! Univariate slice sampling with stepping out and shrinkage on a bounded interval.

use rand::Rng;

use crate::stats::SimRng;

/// One slice-sampling update of `x0` under the unnormalized log density `ln_f`
/// restricted to the open interval `(lo, hi)`.
pub(crate) fn slice_step<F: Fn(f64) -> f64>(rng: &mut SimRng, x0: f64, lo: f64, hi: f64, width: f64, ln_f: F) -> f64 {
    let f0 = ln_f(x0);
    debug_assert!(f0.is_finite(), "slice sampler started outside the support");
    let e: f64 = rng.random::<f64>();
    let level = f0 + libm::log(1.0 - e);
    let u: f64 = rng.random();
    let mut left = x0 - width * u;
    let mut right = left + width;
    let mut steps = 0;
    while left > lo && ln_f(left) > level && steps < 64 {
        left -= width;
        steps += 1;
    }
    steps = 0;
    while right < hi && ln_f(right) > level && steps < 64 {
        right += width;
        steps += 1;
    }
    left = left.max(lo);
    right = right.min(hi);
    for _ in 0..200 {
        let v: f64 = rng.random();
        let x = left + v * (right - left);
        if x > lo && x < hi && ln_f(x) > level {
            return x;
        }
        if x < x0 {
            left = x;
        } else {
            right = x;
        }
    }
    x0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::rng_from_seed;

    #[test]
    fn samples_truncated_normal_moments() {
        let mut rng = rng_from_seed(11);
        let mut x = 0.5;
        let (mut s, mut s2, n) = (0.0, 0.0, 60_000);
        for _ in 0..n {
            x = slice_step(&mut rng, x, 0.0, f64::INFINITY, 1.0, |t| -0.5 * t * t);
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        // half-normal: mean sqrt(2/π), second moment 1
        assert!((mean - libm::sqrt(2.0 / core::f64::consts::PI)).abs() < 0.02);
        assert!((s2 / n as f64 - 1.0).abs() < 0.03);
    }
}
