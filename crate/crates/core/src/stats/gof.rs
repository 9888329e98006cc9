use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::summary::Histogram;
use super::Verdict;
use crate::analytic::geometric_pmf;
use crate::error::{Error, Result};

/// Significance level of the goodness-of-fit verdicts.
pub const GOF_LEVEL: f64 = 0.01;
const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Inclusive lower edges of the pooled cells; the last cell is open.
    pub cell_edges: Vec<u64>,
    pub n: u64,
    pub verdict: Verdict,
}

/// Chi-square test of `value + shift ~ Geometric(p)` on `{1, 2, ...}`.
/// Cells are pooled from the left and into the tail so that every expected
/// count is at least 5.
pub fn gof_geometric(histogram: &Histogram, p: f64, shift: u64) -> Result<GofResult> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("geometric parameter {p} outside (0, 1)")));
    }
    if shift > 1 {
        return Err(Error::Domain(format!("shift must be 0 or 1, got {shift}")));
    }
    let n: u64 = histogram.values().sum();
    let nf = n as f64;
    if histogram.keys().any(|&v| v + shift == 0) {
        // mass outside the support
        return Ok(GofResult {
            statistic: f64::INFINITY,
            df: 0,
            p_value: 0.0,
            cell_edges: vec![],
            n,
            verdict: Verdict::from_check(n, false),
        });
    }
    let observed = |lo: u64, hi: Option<u64>| -> f64 {
        histogram
            .range(lo.saturating_sub(shift)..)
            .take_while(|(&v, _)| hi.is_none_or(|h| v + shift < h))
            .map(|(_, &c)| c as f64)
            .sum()
    };
    // expected count of k >= lo
    let tail = |lo: u64| nf * (1.0 - p).powi(lo as i32 - 1);

    let mut edges = Vec::new();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut lo = 1u64;
    while tail(lo) >= 2.0 * MIN_EXPECTED {
        let mut hi = lo;
        let mut e = 0.0;
        while e < MIN_EXPECTED {
            e += nf * geometric_pmf(hi, p);
            hi += 1;
        }
        if tail(hi) < MIN_EXPECTED {
            break;
        }
        edges.push(lo);
        cells.push((observed(lo, Some(hi)), e));
        lo = hi;
    }
    edges.push(lo);
    cells.push((observed(lo, None), tail(lo)));

    let statistic: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = cells.len() - 1;
    let p_value = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64)
            .map_err(|e| Error::Domain(e.to_string()))?
            .sf(statistic)
    };
    let verdict = if df == 0 {
        Verdict::Inconclusive
    } else {
        Verdict::from_check(n, p_value >= GOF_LEVEL)
    };
    Ok(GofResult {
        statistic,
        df,
        p_value,
        cell_edges: edges,
        n,
        verdict,
    })
}
