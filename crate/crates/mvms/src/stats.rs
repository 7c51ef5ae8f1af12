//! Small statistics helpers: pairwise summation, moments, regression,
//! bootstrap resampling.

use crate::rng::{Channel, NoiseStream};

/// Pairwise (tree) summation.
///
/// Besides the usual accuracy gain this has two properties the toolkit
/// relies on: the reduction tree is fixed by the slice length, so sums are
/// independent of thread schedule; and a slice of 2^k identical values sums
/// to exactly count*value, which keeps degenerate averages bit-exact.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        3 => (xs[0] + xs[1]) + xs[2],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&ss) / (n - 1) as f64
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::INFINITY;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Excess kurtosis (zero for a Gaussian).
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let d2: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let m2 = mean(&d2);
    let d4: Vec<f64> = d2.iter().map(|d| d * d).collect();
    let m4 = mean(&d4);
    m4 / (m2 * m2) - 3.0
}

/// Ordinary least squares y = a + b x.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    let _ = n;
    LineFit { intercept, slope, r_squared }
}

/// Bootstrap resample indices: `n_resamples` rows of `len` indices in [0, len).
/// Addressed by (seed, row, position) so resamples are reproducible.
pub fn bootstrap_indices(seed: u64, len: usize, n_resamples: usize) -> Vec<Vec<usize>> {
    let stream = NoiseStream::new(seed, Channel::Bootstrap);
    (0..n_resamples)
        .map(|r| {
            (0..len)
                .map(|i| stream.below(r as u64, i as u64, 0, len as u64) as usize)
                .collect()
        })
        .collect()
}

/// Percentile bootstrap interval for a statistic of one sample.
pub fn bootstrap_ci<F: Fn(&[f64]) -> f64>(
    xs: &[f64],
    stat: F,
    n_resamples: usize,
    seed: u64,
    level: f64,
) -> (f64, f64) {
    let idx = bootstrap_indices(seed, xs.len(), n_resamples);
    let mut vals: Vec<f64> = idx
        .iter()
        .map(|row| {
            let resampled: Vec<f64> = row.iter().map(|&i| xs[i]).collect();
            stat(&resampled)
        })
        .collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    let lo = ((1.0 - level) / 2.0 * (vals.len() - 1) as f64).round() as usize;
    let hi = ((1.0 - (1.0 - level) / 2.0) * (vals.len() - 1) as f64).round() as usize;
    (vals[lo], vals[hi])
}

/// Weighted p-quantile of sorted values (right-continuous inverse CDF).
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let idx = (p * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_of_equal_power_of_two_is_exact() {
        let v = 1.0 + 2f64.powi(-52);
        let xs = vec![v; 1024];
        assert_eq!(pairwise_sum(&xs), 1024.0 * v);
        assert_eq!(pairwise_sum(&xs) / 1024.0, v);
    }

    #[test]
    fn fit_line_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let f = fit_line(&xs, &ys);
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_indices_reproducible_and_in_range() {
        let a = bootstrap_indices(5, 100, 10);
        let b = bootstrap_indices(5, 100, 10);
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|&i| i < 100));
    }
}
