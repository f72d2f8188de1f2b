//! Small statistics helpers used by the attacks and tests.

use statrs::distribution::{ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Pearson correlation; 0 when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    correlation_from_sums(n, sx, sy, sxx, syy, sxy)
}

#[inline]
pub(crate) fn correlation_from_sums(n: f64, sx: f64, sy: f64, sxx: f64, syy: f64, sxy: f64) -> f64 {
    let cov = n * sxy - sx * sy;
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Two-sided null threshold for `|r|` at `n` samples: under independence
/// `r * sqrt(n)` is approximately standard normal. `comparisons > 1` applies a
/// Bonferroni correction for taking the maximum over that many tests.
pub fn correlation_null_threshold(n: usize, alpha: f64, comparisons: usize) -> f64 {
    let a = alpha / comparisons.max(1) as f64;
    std_normal().inverse_cdf(1.0 - a / 2.0) / (n as f64).sqrt()
}

/// Upper-tail probability of a standard normal.
pub fn normal_sf(z: f64) -> f64 {
    1.0 - std_normal().cdf(z)
}

/// One-sided McNemar test that outcome A fails less often than outcome B on
/// paired trials. `only_a` counts trials where only A failed, `only_b` where
/// only B failed. Returns `(z, p)`.
pub fn mcnemar_one_sided(only_a: u64, only_b: u64) -> (f64, f64) {
    let disc = (only_a + only_b) as f64;
    if disc == 0.0 {
        return (0.0, 1.0);
    }
    let z = (only_b as f64 - only_a as f64) / disc.sqrt();
    (z, normal_sf(z))
}

/// Standard error of a binomial proportion.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
