//! Sample summaries, least-squares fits and percentile bootstrap intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_stream, purpose, stream_rng};

/// Resamples used for every bootstrap interval.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Linear-interpolation quantile of sorted data, p ∈ [0, 1].
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_sorted(&sorted(xs), 0.5)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for a single value.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// sqrt(mean x²).
pub fn root_mean_square(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let s = sorted(xs);
        let var = variance(xs);
        Summary {
            count: xs.len(),
            mean: mean(xs),
            variance: var,
            std_error: (var / xs.len() as f64).sqrt(),
            min: s[0],
            q25: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q75: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        }
    }
}

/// Ordinary least squares y ≈ a + b x, returning (b, a).
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "a line needs two points");
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    (b, my - b * mx)
}

/// Least-squares line through (τ, v), evaluated at τ = 0.
pub fn extrapolate_to_zero(tau: &[f64], values: &[f64]) -> f64 {
    if tau.len() == 1 {
        return values[0];
    }
    ols(tau, values).1
}

/// A fitted log-log slope with its percentile bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
    pub bootstrap_seed: u64,
}

impl SlopeFit {
    pub fn excludes_zero(&self) -> bool {
        self.ci_high < 0.0 || self.ci_low > 0.0
    }
}

/// Fits log stat(sample_i) against log x_i, resampling each sample with
/// replacement independently to get a 95% percentile interval.
///
/// Returns `None` when the statistic is not positive for some group, since
/// its logarithm is then undefined.
pub fn bootstrap_log_slope(groups: &[(f64, Vec<f64>)], stat: impl Fn(&[f64]) -> f64, resamples: usize, seed: u64) -> Option<SlopeFit> {
    let lx: Vec<f64> = groups.iter().map(|g| g.0.ln()).collect();
    let point: Vec<f64> = groups.iter().map(|g| stat(&g.1)).collect();
    if point.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let ly: Vec<f64> = point.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = ols(&lx, &ly);
    let mut rng = stream_rng(seed, derive_stream(purpose::BOOTSTRAP, 0));
    let mut slopes = Vec::with_capacity(resamples);
    let mut buf = Vec::new();
    for _ in 0..resamples {
        let mut ys = Vec::with_capacity(groups.len());
        for (_, sample) in groups {
            buf.clear();
            buf.extend((0..sample.len()).map(|_| sample[rng.random_range(0..sample.len())]));
            ys.push(stat(&buf).max(f64::MIN_POSITIVE).ln());
        }
        slopes.push(ols(&lx, &ys).0);
    }
    slopes.sort_by(f64::total_cmp);
    Some(SlopeFit {
        slope,
        intercept,
        ci_low: quantile_sorted(&slopes, 0.025),
        ci_high: quantile_sorted(&slopes, 0.975),
        resamples,
        bootstrap_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
    }

    #[test]
    fn summary_of_constant_sample() {
        let s = Summary::of(&[2.0; 10]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.median, 2.0);
    }

    #[test]
    fn ols_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let (b, a) = ols(&x, &y);
        assert!((b + 0.5).abs() < 1e-14 && (a - 3.0).abs() < 1e-14);
        assert!((extrapolate_to_zero(&x, &y) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn bootstrap_brackets_a_power_law() {
        let mut rng = stream_rng(1, 1);
        let groups: Vec<(f64, Vec<f64>)> = [100.0, 400.0, 1600.0, 6400.0]
            .iter()
            .map(|&n: &f64| (n, (0..64).map(|_| n.powf(-0.5) * (0.5 + rng.random::<f64>())).collect()))
            .collect();
        let fit = bootstrap_log_slope(&groups, median, 200, 3).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.05, "{fit:?}");
        assert!(fit.ci_low < fit.slope && fit.slope < fit.ci_high);
        assert!(fit.excludes_zero());
        let again = bootstrap_log_slope(&groups, median, 200, 3).unwrap();
        assert_eq!(fit, again);
    }

    #[test]
    fn zero_statistic_has_no_log_fit() {
        let groups = vec![(1.0, vec![0.0; 4]), (2.0, vec![0.0; 4])];
        assert!(bootstrap_log_slope(&groups, median, 10, 0).is_none());
    }
}
