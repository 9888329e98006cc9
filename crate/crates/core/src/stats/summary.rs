use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_Z: f64 = 3.0;

/// Value -> count. Merging is exact, so partial histograms from any number
/// of workers combine to the same result in any order.
pub type Histogram = BTreeMap<u64, u64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub n: u64,
    pub mean: f64,
    /// Unbiased sample variance (0 for a single sample).
    pub variance: f64,
    pub z: f64,
    pub mean_ci_halfwidth: f64,
    /// Asymptotic standard error of the sample variance, from the fourth
    /// central moment.
    pub var_std_error: f64,
    pub histogram: Histogram,
}

impl EstimateSummary {
    /// `sqrt(variance / n)`
    pub fn mean_std_error(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }

    /// Fraction of samples equal to `v`.
    pub fn frequency(&self, v: u64) -> f64 {
        self.histogram.get(&v).copied().unwrap_or(0) as f64 / self.n as f64
    }
}

pub fn summarize(samples: &[u64], z: f64) -> Result<EstimateSummary> {
    let mut h = Histogram::new();
    for &s in samples {
        *h.entry(s).or_default() += 1;
    }
    summarize_histogram(&h, z)
}

pub fn summarize_histogram(histogram: &Histogram, z: f64) -> Result<EstimateSummary> {
    let n: u64 = histogram.values().sum();
    if n == 0 {
        return Err(Error::Precondition("cannot summarize an empty sample".into()));
    }
    let nf = n as f64;
    let mean = histogram.iter().map(|(&v, &c)| v as f64 * c as f64).sum::<f64>() / nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for (&v, &c) in histogram {
        let d2 = (v as f64 - mean).powi(2);
        m2 += c as f64 * d2;
        m4 += c as f64 * d2 * d2;
    }
    let variance = if n > 1 { m2 / (nf - 1.0) } else { 0.0 };
    let var_std_error = if n > 1 {
        let m4 = m4 / nf;
        let s4 = variance * variance;
        ((m4 - (nf - 3.0) / (nf - 1.0) * s4) / nf).max(0.0).sqrt()
    } else {
        0.0
    };
    Ok(EstimateSummary {
        n,
        mean,
        variance,
        z,
        mean_ci_halfwidth: z * (variance / nf).sqrt(),
        var_std_error,
        histogram: histogram.clone(),
    })
}
