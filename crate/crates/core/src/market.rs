//! Ingestion of observed probability series (`time,contestant,prob` CSV)
//! and their crossing counts.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::analytic::{exp_downcrossings, ThresholdPair};
use crate::engine::MonitorState;
use crate::error::{Error, Result};

/// Sums at a common timestamp within `1 ± NORM_EPS` are renormalized.
pub const NORM_EPS: f64 = 0.05;

pub const UNDERCOUNT_CAVEAT: &str = "crossings are counted on the sampled series; \
     excursions between samples are invisible, so observed counts can only undercount \
     those of the underlying path";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds since the Unix epoch.
    pub time: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSeries {
    /// In order of first appearance.
    pub contestants: Vec<String>,
    pub samples: BTreeMap<String, Vec<Sample>>,
    /// Common timestamps whose probabilities were rescaled.
    pub renormalized: usize,
}

fn parse_time(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(n) = s.parse::<i64>() {
        return Some(n as f64);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp_micros() as f64 / 1e6);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp_micros() as f64 / 1e6);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc().timestamp() as f64)
}

/// Read, validate and renormalize a market CSV.
pub fn ingest_market_csv(path: &Path) -> Result<MarketSeries> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let name = path.display().to_string();
    let parse_err = |line: u64, message: String| Error::Parse {
        path: name.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| parse_err(1, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    if header.is_empty() || header == [""] {
        return Err(Error::NoData(name));
    }
    if header != ["time", "contestant", "prob"] {
        return Err(parse_err(
            1,
            format!("expected header time,contestant,prob, got {}", header.join(",")),
        ));
    }

    let mut contestants: Vec<String> = Vec::new();
    let mut samples: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    // raw timestamp text per parsed time, for error messages
    let mut labels: HashMap<u64, String> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", row.len())));
        }
        let time = parse_time(&row[0]).ok_or_else(|| parse_err(line, format!("invalid time '{}'", &row[0])))?;
        let who = row[1].to_string();
        if who.is_empty() {
            return Err(parse_err(line, "empty contestant id".into()));
        }
        let prob: f64 = row[2]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid probability '{}'", &row[2])))?;
        if !(0.0..=1.0).contains(&prob) {
            return Err(parse_err(line, format!("probability {prob} outside [0, 1]")));
        }
        let series = samples.entry(who.clone()).or_insert_with(|| {
            contestants.push(who.clone());
            Vec::new()
        });
        if let Some(last) = series.last() {
            if time <= last.time {
                return Err(parse_err(
                    line,
                    format!("timestamps for '{who}' are not strictly increasing"),
                ));
            }
        }
        series.push(Sample { time, prob });
        labels.entry(time.to_bits()).or_insert_with(|| row[0].to_string());
    }
    if samples.is_empty() {
        return Err(Error::NoData(name));
    }

    // timestamps shared by every contestant
    let mut seen: BTreeMap<u64, Vec<(String, usize)>> = BTreeMap::new();
    for (who, series) in &samples {
        for (k, s) in series.iter().enumerate() {
            seen.entry(s.time.to_bits()).or_default().push((who.clone(), k));
        }
    }
    let mut renormalized = 0;
    for (bits, members) in seen {
        if members.len() != samples.len() {
            continue;
        }
        let sum: f64 = members.iter().map(|(w, k)| samples[w][*k].prob).sum();
        if (sum - 1.0).abs() > NORM_EPS {
            return Err(Error::Normalization {
                timestamp: labels[&bits].clone(),
                sum,
            });
        }
        if sum != 1.0 {
            renormalized += 1;
            for (w, k) in members {
                samples.get_mut(&w).unwrap()[k].prob /= sum;
            }
        }
    }
    Ok(MarketSeries {
        contestants,
        samples,
        renormalized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Piecewise-linear path through the samples.
    Linear,
    /// Last observation carried forward.
    Step,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Interpolation::Linear),
            "step" => Ok(Interpolation::Step),
            _ => Err(Error::Domain(format!("unknown interpolation '{s}' (linear or step)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestantCrossings {
    pub contestant: String,
    pub monitor: MonitorState,
    pub samples: usize,
    /// First time the path is at `b` (seconds since the epoch).
    pub first_b_time: Option<f64>,
    pub initial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketCrossings {
    pub pair: ThresholdPair,
    pub interpolation: Interpolation,
    pub contestants: Vec<ContestantCrossings>,
    pub n_b: u32,
    pub d_ab: u32,
    /// Expectations for a feasible process started at the initial values.
    pub expected_n_b: f64,
    pub expected_d_ab: f64,
    pub caveat: String,
}

/// Walk one contestant's path through the monitor.
fn walk(samples: &[Sample], pair: &ThresholdPair, interp: Interpolation) -> (MonitorState, Option<f64>) {
    let (a, b) = (pair.a(), pair.b());
    let first = samples[0];
    let mut m = MonitorState::starting_at(first.prob, pair);
    let mut first_b = m.reached_b.then_some(first.time);
    for w in samples.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let (v0, v1) = (s0.prob, s1.prob);
        if interp == Interpolation::Linear {
            // thresholds strictly inside the segment, in path order
            let mut hits: Vec<f64> = [a, b]
                .into_iter()
                .filter(|&t| (v0 < t && t < v1) || (v1 < t && t < v0))
                .collect();
            if v1 < v0 {
                hits.reverse();
            }
            for t in hits {
                m.observe(t, pair);
                if t == b && first_b.is_none() {
                    first_b = Some(s0.time + (s1.time - s0.time) * (b - v0) / (v1 - v0));
                }
            }
        }
        m.observe(v1, pair);
        if m.reached_b && first_b.is_none() {
            first_b = Some(s1.time);
        }
    }
    (m, first_b)
}

pub fn crossing_stats_from_series(
    series: &MarketSeries,
    pair: &ThresholdPair,
    interp: Interpolation,
) -> Result<MarketCrossings> {
    let mut out = Vec::with_capacity(series.contestants.len());
    let (mut n_b, mut d_ab) = (0, 0);
    let (mut e_nb, mut e_dab) = (0.0, 0.0);
    for who in &series.contestants {
        let s = &series.samples[who];
        let (monitor, first_b_time) = walk(s, pair, interp);
        n_b += monitor.reached_b as u32;
        d_ab += monitor.downcrossings;
        let p = s[0].prob;
        e_nb += (p / pair.b()).min(1.0);
        e_dab += exp_downcrossings(p, pair)?;
        out.push(ContestantCrossings {
            contestant: who.clone(),
            monitor,
            samples: s.len(),
            first_b_time,
            initial: p,
        });
    }
    Ok(MarketCrossings {
        pair: *pair,
        interpolation: interp,
        contestants: out,
        n_b,
        d_ab,
        expected_n_b: e_nb,
        expected_d_ab: e_dab,
        caveat: UNDERCOUNT_CAVEAT.into(),
    })
}
