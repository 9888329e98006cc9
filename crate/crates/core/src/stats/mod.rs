//! Estimates, goodness of fit and bound-compliance reports built from run
//! histograms.

mod gof;
mod report;
mod summary;

pub use gof::{gof_geometric, GofResult};
pub use report::{bounds_report, tally_report, BoundCheck, BoundsReport, CheckKind};
pub use summary::{summarize, summarize_histogram, EstimateSummary, Histogram, DEFAULT_Z};

use serde::{Deserialize, Serialize};

/// Below this many samples a comparison is reported as inconclusive.
pub const MIN_CONCLUSIVE: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    fn from_check(n: u64, ok: bool) -> Self {
        if n < MIN_CONCLUSIVE {
            Verdict::Inconclusive
        } else if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}
