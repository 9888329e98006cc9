//! Closed-form hitting probabilities, downcrossing laws and variance caps.
//!
//! Everything here is a pure function of the threshold pair `0 < a < b < 1`
//! and serves as the reference the samplers are checked against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The interval `[a, b]` whose downcrossings are counted; `b` is also the
/// level that defines `N_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    a: f64,
    b: f64,
}

impl ThresholdPair {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!("thresholds must be finite, got a={a}, b={b}")));
        }
        if !(a > 0.0 && a < b && b < 1.0) {
            return Err(Error::Domain(format!(
                "thresholds must satisfy 0 < a < b < 1, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn b(&self) -> f64 {
        self.b
    }

    /// `a / b`, the shape parameter of the small-spread construction.
    pub fn alpha(&self) -> f64 {
        self.a / self.b
    }

    /// Success probability `(b - a) / (1 - a)` of the geometric law of `D_ab + 1`.
    pub fn geometric_success(&self) -> f64 {
        (self.b - self.a) / (1.0 - self.a)
    }
}

/// Probability that a continuous martingale started at `x` hits `upper`
/// before `lower`.
pub fn hit_prob(x: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(lower < upper) {
        return Err(Error::Domain(format!("degenerate interval [{lower}, {upper}]")));
    }
    if !(lower <= x && x <= upper) {
        return Err(Error::Domain(format!("start {x} outside [{lower}, {upper}]")));
    }
    Ok((x - lower) / (upper - lower))
}

/// Expected number of downcrossings of `[a, b]` by a martingale started at
/// `x` and absorbed at 0 or 1.
pub fn exp_downcrossings(x: f64, pair: &ThresholdPair) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("start {x} outside [0, 1]")));
    }
    let (a, b) = (pair.a, pair.b);
    Ok(if x <= b {
        x * (1.0 - b) / (b - a)
    } else {
        b * (1.0 - x) / (b - a)
    })
}

/// Ratio `a(1-b) / (b(1-a))` of successive downcrossing probabilities from `b`.
pub fn downcrossing_ratio(pair: &ThresholdPair) -> f64 {
    let (a, b) = (pair.a, pair.b);
    a * (1.0 - b) / (b * (1.0 - a))
}

/// Law of the number of downcrossings for a martingale started at `b`.
pub fn mod_geometric_pmf(d: u64, pair: &ThresholdPair) -> f64 {
    let (a, b) = (pair.a, pair.b);
    if d == 0 {
        return (b - a) / (1.0 - a);
    }
    let rho = downcrossing_ratio(pair);
    (1.0 - b) / (1.0 - a) * rho.powi((d - 1) as i32) * (1.0 - rho)
}

/// `P(X = k)` for `X ~ Geometric(p)` supported on `{1, 2, ...}`.
pub fn geometric_pmf(k: u64, p: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        p * (1.0 - p).powi((k - 1) as i32)
    }
}

/// Theoretical means and variance caps for a threshold pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct BoundBundle {
    pub mean_Nb: f64,
    pub mean_Dab: f64,
    pub var_cap_Nb: f64,
    pub var_cap_Dab_conjectured: f64,
    pub var_cap_Dab_proved: f64,
    pub k_alpha: u64,
}

/// `floor(1 / (1 - alpha))`, guarded against `1.9999999999` style rounding.
pub fn spread_unit(alpha: f64) -> u64 {
    (1.0 / (1.0 - alpha) + 1e-9).floor() as u64
}

/// Maximal size `6 floor(1/(1-alpha)) - 1` of the small-spread terminal configuration.
pub fn k_alpha(alpha: f64) -> u64 {
    6 * spread_unit(alpha) - 1
}

pub fn bounds(pair: &ThresholdPair) -> BoundBundle {
    let (a, b) = (pair.a, pair.b);
    let ratio = (1.0 - b) / (b - a);
    let mu = ((2.0 - b) / (b * b)).min(1.0 / (a * a));
    let proved = ((ratio + 2.0 * ratio * ratio + mu).sqrt() + mu.sqrt()).powi(2) - ratio * ratio;
    BoundBundle {
        mean_Nb: 1.0 / b,
        mean_Dab: ratio,
        var_cap_Nb: (1.0 - b) / (b * b),
        var_cap_Dab_conjectured: ratio * ratio + ratio,
        var_cap_Dab_proved: proved,
        k_alpha: k_alpha(pair.alpha()),
    }
}
