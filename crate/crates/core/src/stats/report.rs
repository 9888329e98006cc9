use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::summary::{summarize_histogram, EstimateSummary};
use super::Verdict;
use crate::analytic::{bounds, BoundBundle, ThresholdPair};
use crate::error::Result;
use crate::montecarlo::Tally;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Empirical mean against a universal expectation.
    Mean,
    /// Empirical variance against a proved cap.
    VarianceCap,
    /// Empirical variance against a conjectured cap; a failure is evidence
    /// about the conjecture, not a contradiction of a theorem.
    Conjecture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub kind: CheckKind,
    pub statistic: String,
    pub target: f64,
    pub estimate: f64,
    /// `estimate - target`
    pub margin: f64,
    /// Allowed excess: `z` standard errors.
    pub allowance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub pair: ThresholdPair,
    pub theoretical: BoundBundle,
    pub n_b: EstimateSummary,
    pub d_ab: EstimateSummary,
    pub checks: Vec<BoundCheck>,
}

fn mean_check(name: &str, stat: &str, s: &EstimateSummary, target: f64) -> BoundCheck {
    let margin = s.mean - target;
    BoundCheck {
        name: name.into(),
        kind: CheckKind::Mean,
        statistic: stat.into(),
        target,
        estimate: s.mean,
        margin,
        allowance: s.mean_ci_halfwidth,
        verdict: Verdict::from_check(s.n, margin.abs() <= s.mean_ci_halfwidth),
    }
}

fn cap_check(name: &str, kind: CheckKind, stat: &str, s: &EstimateSummary, cap: f64) -> BoundCheck {
    let margin = s.variance - cap;
    let allowance = s.z * s.var_std_error;
    BoundCheck {
        name: name.into(),
        kind,
        statistic: stat.into(),
        target: cap,
        estimate: s.variance,
        margin,
        allowance,
        verdict: Verdict::from_check(s.n, margin <= allowance),
    }
}

/// Compare the empirical laws of `N_b` and `D_ab` with the universal means
/// and the variance caps of `pair`.
pub fn bounds_report(pair: &ThresholdPair, n_b: &EstimateSummary, d_ab: &EstimateSummary) -> BoundsReport {
    let t = bounds(pair);
    let checks = vec![
        mean_check("mean_Nb", "N_b", n_b, t.mean_Nb),
        mean_check("mean_Dab", "D_ab", d_ab, t.mean_Dab),
        cap_check("var_cap_Nb", CheckKind::VarianceCap, "N_b", n_b, t.var_cap_Nb),
        cap_check(
            "var_cap_Dab_proved",
            CheckKind::VarianceCap,
            "D_ab",
            d_ab,
            t.var_cap_Dab_proved,
        ),
        cap_check(
            "var_cap_Dab_conjectured",
            CheckKind::Conjecture,
            "D_ab",
            d_ab,
            t.var_cap_Dab_conjectured,
        ),
    ];
    BoundsReport {
        pair: *pair,
        theoretical: t,
        n_b: n_b.clone(),
        d_ab: d_ab.clone(),
        checks,
    }
}

/// [`bounds_report`] for the completed runs of a tally.
pub fn tally_report(pair: &ThresholdPair, tally: &Tally, z: f64) -> Result<BoundsReport> {
    let n_b = summarize_histogram(&tally.n_b, z)?;
    let d_ab = summarize_histogram(&tally.d_ab, z)?;
    Ok(bounds_report(pair, &n_b, &d_ab))
}

impl BoundsReport {
    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "thresholds a = {}, b = {}", self.pair.a(), self.pair.b());
        for (label, s) in [("N_b", &self.n_b), ("D_ab", &self.d_ab)] {
            let _ = writeln!(
                out,
                "{label:<5} n = {:<8} mean = {:<12.6} var = {:<12.6} (±{:.4} / ±{:.4})",
                s.n,
                s.mean,
                s.variance,
                s.mean_ci_halfwidth,
                s.z * s.var_std_error
            );
        }
        let _ = writeln!(
            out,
            "{:<26} {:<12} {:>12} {:>12} {:>12}  verdict",
            "check", "kind", "target", "estimate", "allowance"
        );
        for c in &self.checks {
            let kind = match c.kind {
                CheckKind::Mean => "mean",
                CheckKind::VarianceCap => "cap",
                CheckKind::Conjecture => "conjecture",
            };
            let _ = writeln!(
                out,
                "{:<26} {:<12} {:>12.6} {:>12.6} {:>12.6}  {}",
                c.name,
                kind,
                c.target,
                c.estimate,
                c.allowance,
                c.verdict.as_str()
            );
        }
        out
    }

    /// `statistic,value,count` rows for both histograms.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("statistic,value,count\n");
        for (label, s) in [("N_b", &self.n_b), ("D_ab", &self.d_ab)] {
            for (v, c) in &s.histogram {
                let _ = writeln!(out, "{label},{v},{c}");
            }
        }
        out
    }
}
