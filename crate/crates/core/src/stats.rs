//! Small statistical helpers shared by the harness and the tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};
use crate::skellam::{skellam_log_pmf, window_radius, SkellamParams};

/// Pearson goodness-of-fit result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Chi-square test of `samples` against `Sk(0, variance)`.
///
/// Integers are binned individually where the expected count is at least
/// `min_expected`; both tails are pooled into one bin each.
pub fn skellam_chi_square(samples: &[i64], variance: f64, min_expected: f64) -> Result<ChiSquare> {
    if samples.is_empty() {
        return Err(invalid("samples", "need at least one sample"));
    }
    let params = SkellamParams::new(0, variance)?;
    let n = samples.len() as f64;
    let radius = window_radius(variance);
    let pmf = (-radius..=radius)
        .map(|k| skellam_log_pmf(k, &params).map(f64::exp))
        .collect::<Result<Vec<_>>>()?;
    // Bins are symmetric: [.., -m-1], -m..=m, [m+1, ..].
    let mut m = 0i64;
    while m < radius && pmf[(radius + m + 1) as usize] * n >= min_expected {
        m += 1;
    }
    let centre: f64 = pmf[(radius - m) as usize..=(radius + m) as usize].iter().sum();
    let tail = ((1.0 - centre) / 2.0).max(0.0);
    let mut expected: Vec<f64> = Vec::with_capacity(2 * m as usize + 3);
    expected.push(tail);
    expected.extend_from_slice(&pmf[(radius - m) as usize..=(radius + m) as usize]);
    expected.push(tail);
    let mut observed = vec![0u64; expected.len()];
    for &s in samples {
        let bin = if s < -m {
            0
        } else if s > m {
            expected.len() - 1
        } else {
            (s + m + 1) as usize
        };
        observed[bin] += 1;
    }
    let pooled_tails = tail * n >= min_expected;
    let mut statistic = 0.0;
    let mut bins = 0;
    for (i, (&o, &p)) in observed.iter().zip(&expected).enumerate() {
        let is_tail = i == 0 || i == expected.len() - 1;
        if is_tail && !pooled_tails {
            continue;
        }
        let e = p * n;
        statistic += (o as f64 - e).powi(2) / e;
        bins += 1;
    }
    let dof = bins - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| 1.0 - d.cdf(statistic))
        .unwrap_or(f64::NAN);
    Ok(ChiSquare { statistic, dof, p_value })
}

/// Sample mean and unbiased sample variance.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean and the half-width `1.96 sd / sqrt(n)` of its 95% interval.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let (mean, var) = mean_and_variance(values);
    (mean, 1.96 * (var / values.len() as f64).sqrt())
}
