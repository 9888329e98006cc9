use serde::{Deserialize, Serialize};

use crate::analytic::ThresholdPair;

/// Two levels closer than this are the same level.
pub const LEVEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorStatus {
    /// Has never reached `b`.
    PreB,
    /// Reached `b` more recently than `a`: potentially mid-downcrossing.
    Active,
    Inactive,
}

impl MonitorStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            MonitorStatus::PreB => "pre_b",
            MonitorStatus::Active => "active",
            MonitorStatus::Inactive => "inactive",
        }
    }
}

/// Which monitored threshold a level hit concerns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    Lower,
    Upper,
}

/// Crossing monitor of one component for the interval `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorState {
    pub status: MonitorStatus,
    pub reached_b: bool,
    pub downcrossings: u32,
    pub sup_value: f64,
}

impl Default for MonitorState {
    fn default() -> Self {
        Self {
            status: MonitorStatus::PreB,
            reached_b: false,
            downcrossings: 0,
            sup_value: 0.0,
        }
    }
}

impl MonitorState {
    /// Monitor for a path starting at `value`.
    pub fn starting_at(value: f64, pair: &ThresholdPair) -> Self {
        let mut m = Self {
            sup_value: value,
            ..Self::default()
        };
        m.observe(value, pair);
        m
    }

    /// The path touched `b`.
    #[inline]
    pub fn hit_upper(&mut self) {
        self.reached_b = true;
        self.status = MonitorStatus::Active;
    }

    /// The path touched `a`; returns true when this completed a downcrossing.
    #[inline]
    pub fn hit_lower(&mut self) -> bool {
        if self.status == MonitorStatus::Active {
            self.status = MonitorStatus::Inactive;
            self.downcrossings += 1;
            true
        } else {
            false
        }
    }

    #[inline]
    pub fn hit(&mut self, which: Threshold) {
        match which {
            Threshold::Upper => self.hit_upper(),
            Threshold::Lower => {
                self.hit_lower();
            }
        }
    }

    /// Record that the path is at `value`. Callers must observe every point
    /// where the path meets `a` or `b`; between observations the path is
    /// assumed not to cross either threshold.
    pub fn observe(&mut self, value: f64, pair: &ThresholdPair) {
        if value > self.sup_value {
            self.sup_value = value;
        }
        if value >= pair.b() - LEVEL_TOL {
            if self.status != MonitorStatus::Active {
                self.hit_upper();
            }
        } else if value <= pair.a() + LEVEL_TOL {
            self.hit_lower();
        }
    }

    #[inline]
    pub fn note_sup(&mut self, value: f64) {
        if value > self.sup_value {
            self.sup_value = value;
        }
    }
}
