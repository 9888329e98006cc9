//! Euler scheme for the k-allele Wright-Fisher diffusion with crossing
//! monitors, and the cov3 Monte Carlo estimator.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytic::ThresholdPair;
use crate::engine::{ComponentId, MonitorState, MonitorStatus, RunRecord, MASS_TOL};
use crate::error::{Error, Result};
use crate::rng::run_stream;

/// Bridge probabilities `exp(-x)` are skipped once `x` exceeds this.
const BRIDGE_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfRunParams {
    pub k: usize,
    pub h: f64,
    pub seed: u64,
    pub monitors: ThresholdPair,
    pub bridge_correction: bool,
    pub max_time: f64,
}

impl WfRunParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Precondition(format!("need k >= 2 alleles, got {}", self.k)));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Precondition(format!(
                "time step must be positive, got {}",
                self.h
            )));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::Precondition(format!(
                "max_time must be positive, got {}",
                self.max_time
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfState {
    pub values: Vec<f64>,
    pub absorbed: Vec<bool>,
    pub time: f64,
    /// Indices of unabsorbed components.
    #[serde(skip)]
    alive: Vec<usize>,
}

impl WfState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Precondition("need at least two components".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Precondition("component values must lie in [0, 1]".into()));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(Error::Precondition(format!("values sum to {sum}, expected 1")));
        }
        let absorbed: Vec<bool> = values.iter().map(|&v| v <= 0.0).collect();
        let alive = (0..values.len()).filter(|&i| !absorbed[i]).collect();
        let mut s = Self {
            values,
            absorbed,
            time: 0.0,
            alive,
        };
        if let Some(i) = s.values.iter().position(|&v| v >= 1.0) {
            s.fixate(i);
        }
        Ok(s)
    }

    /// `k` equal components at `1/k`.
    pub fn equal(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn is_fixed(&self) -> bool {
        self.alive.len() <= 1
    }

    pub fn winner(&self) -> Option<usize> {
        match self.alive.as_slice() {
            [i] => Some(*i),
            _ => None,
        }
    }

    fn fixate(&mut self, winner: usize) {
        for (i, v) in self.values.iter_mut().enumerate() {
            *v = if i == winner { 1.0 } else { 0.0 };
            self.absorbed[i] = i != winner;
        }
        self.alive = vec![winner];
    }
}

/// One Euler step of length `h`: alive components move by
/// `sqrt(h x_i) (g_i - sqrt(x_i) sum_j sqrt(x_j) g_j)`, which has covariance
/// `h x_i (delta_ij - x_j)`. Components pushed to 0 are absorbed and the
/// survivors rescaled to total mass 1; a component pushed to 1 fixates.
pub fn wf_step<R: Rng + ?Sized>(state: &mut WfState, h: f64, rng: &mut R) {
    let mut g = Vec::new();
    wf_step_with(state, h, rng, &mut g);
}

fn wf_step_with<R: Rng + ?Sized>(state: &mut WfState, h: f64, rng: &mut R, g: &mut Vec<f64>) {
    if state.is_fixed() {
        return;
    }
    g.clear();
    let mut s = 0.0;
    for &i in &state.alive {
        let z: f64 = rng.sample(StandardNormal);
        s += state.values[i].sqrt() * z;
        g.push(z);
    }
    let sh = h.sqrt();
    let mut any_absorbed = false;
    let mut top = None;
    for (&i, &z) in state.alive.iter().zip(g.iter()) {
        let r = state.values[i].sqrt();
        let v = state.values[i] + sh * r * (z - r * s);
        if v <= 0.0 {
            state.values[i] = 0.0;
            state.absorbed[i] = true;
            any_absorbed = true;
        } else if v >= 1.0 {
            state.values[i] = 1.0;
            top = Some(i);
        } else {
            state.values[i] = v;
        }
    }
    state.time += h;
    if let Some(i) = top {
        state.fixate(i);
        return;
    }
    if any_absorbed {
        let absorbed = &state.absorbed;
        state.alive.retain(|&i| !absorbed[i]);
        match state.alive.as_slice() {
            [] => unreachable!("mass vanished in one step"),
            [i] => {
                let i = *i;
                state.fixate(i);
            }
            _ => {
                let total: f64 = state.alive.iter().map(|&i| state.values[i]).sum();
                for &i in &state.alive {
                    state.values[i] /= total;
                }
            }
        }
    }
}

/// Probability that a Brownian bridge with variance rate `var` over time `h`
/// touches a level at distances `d0`, `d1` (same side) from its endpoints.
#[inline]
fn bridge_hit<R: Rng + ?Sized>(rng: &mut R, d0: f64, d1: f64, var: f64, h: f64) -> bool {
    let x = 2.0 * d0 * d1 / (var * h);
    x < BRIDGE_CUTOFF && rng.random::<f64>() < (-x).exp()
}

fn midpoint_variance(x0: f64, x1: f64) -> f64 {
    let m = 0.5 * (x0 + x1);
    (m * (1.0 - m)).max(f64::MIN_POSITIVE)
}

/// Update a monitor for one step `x0 -> x1`, including the bridge
/// correction for hits between the grid times.
fn monitor_step<R: Rng + ?Sized>(
    m: &mut MonitorState,
    x0: f64,
    x1: f64,
    pair: &ThresholdPair,
    h: f64,
    bridge: bool,
    rng: &mut R,
) {
    let (a, b) = (pair.a(), pair.b());
    if bridge {
        let var = midpoint_variance(x0, x1);
        if m.status == MonitorStatus::Active {
            if x0 > a && x1 > a && bridge_hit(rng, x0 - a, x1 - a, var, h) {
                m.hit_lower();
            }
        } else if x0 < b && x1 < b && bridge_hit(rng, b - x0, b - x1, var, h) {
            m.hit_upper();
            m.note_sup(b);
        }
    }
    m.observe(x1, pair);
}

/// Result of one diffusion run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WfOutcome {
    Fixated(RunRecord),
    /// `max_time` elapsed before fixation.
    Truncated {
        time: f64,
    },
}

impl WfOutcome {
    pub fn record(&self) -> Option<&RunRecord> {
        match self {
            WfOutcome::Fixated(r) => Some(r),
            WfOutcome::Truncated { .. } => None,
        }
    }

    pub fn into_record(self) -> Option<RunRecord> {
        match self {
            WfOutcome::Fixated(r) => Some(r),
            WfOutcome::Truncated { .. } => None,
        }
    }
}

/// Step from `start` until fixation or `max_time`, monitoring every
/// component for the pair `params.monitors`.
pub fn wf_run<R: Rng + ?Sized>(params: &WfRunParams, start: &WfState, rng: &mut R) -> Result<WfOutcome> {
    params.validate()?;
    let pair = params.monitors;
    let mut state = start.clone();
    let mut monitors: Vec<MonitorState> = state
        .values
        .iter()
        .map(|&v| MonitorState::starting_at(v, &pair))
        .collect();
    let mut prev = state.values.clone();
    let mut g = Vec::with_capacity(state.values.len());
    let mut steps = 0u64;
    while !state.is_fixed() {
        if state.time >= params.max_time {
            return Ok(WfOutcome::Truncated { time: state.time });
        }
        for &i in &state.alive {
            prev[i] = state.values[i];
        }
        let moving = state.alive.clone();
        wf_step_with(&mut state, params.h, rng, &mut g);
        steps += 1;
        for i in moving {
            monitor_step(
                &mut monitors[i],
                prev[i],
                state.values[i],
                &pair,
                params.h,
                params.bridge_correction,
                rng,
            );
        }
    }
    let winner = state.winner().expect("fixed state has a winner");
    let n_b = monitors.iter().filter(|m| m.reached_b).count() as u32;
    let d_ab = monitors.iter().map(|m| m.downcrossings).sum();
    Ok(WfOutcome::Fixated(RunRecord {
        n_b,
        d_ab,
        winner_id: ComponentId(winner as u32),
        per_component: monitors
            .into_iter()
            .enumerate()
            .map(|(i, m)| (ComponentId(i as u32), m))
            .collect(),
        stages_executed: steps,
        moves: steps,
        checkpoint_d_ab: None,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov3Estimate {
    pub x: f64,
    pub y: f64,
    pub b: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub runs: u64,
    pub truncated: u64,
}

/// Fraction of 3-allele runs from `(x, y, 1 - x - y)` in which both of the
/// first two components reach `b`. Uses `params.h`, `params.seed`,
/// `params.max_time` and `params.bridge_correction`; run `i` draws from
/// stream `i` of the seed. Truncated runs are excluded.
pub fn cov3_mc(x: f64, y: f64, b: f64, params: &WfRunParams, runs: u64) -> Result<Cov3Estimate> {
    if !(x >= 0.0 && y >= 0.0 && x + y < 1.0 && x < b && y < b && b < 1.0) {
        return Err(Error::Precondition(format!(
            "cov3 needs 0 <= x, y < b < 1 and x + y < 1, got x={x}, y={y}, b={b}"
        )));
    }
    if runs == 0 {
        return Err(Error::Precondition("cov3 needs at least one run".into()));
    }
    let mut est = Cov3Estimate {
        x,
        y,
        b,
        estimate: 0.0,
        std_error: 0.0,
        runs,
        truncated: 0,
    };
    if x == 0.0 || y == 0.0 {
        return Ok(est);
    }
    let mut hits = 0u64;
    let mut g = Vec::with_capacity(3);
    for i in 0..runs {
        let mut rng = run_stream(params.seed, i);
        let mut state = WfState::new(vec![x, y, 1.0 - x - y])?;
        let mut reached = [false, false];
        let outcome = loop {
            if reached[0] && reached[1] {
                break Some(true);
            }
            // a component absorbed at 0 before reaching b can no longer
            if (0..2).any(|c| !reached[c] && state.absorbed[c]) {
                break Some(false);
            }
            if state.time >= params.max_time {
                break None;
            }
            let prev = [state.values[0], state.values[1]];
            wf_step_with(&mut state, params.h, &mut rng, &mut g);
            for c in 0..2 {
                if reached[c] {
                    continue;
                }
                let (x0, x1) = (prev[c], state.values[c]);
                reached[c] = x1 >= b
                    || (params.bridge_correction
                        && x0 < b
                        && bridge_hit(&mut rng, b - x0, b - x1, midpoint_variance(x0, x1), params.h));
            }
        };
        match outcome {
            Some(true) => hits += 1,
            Some(false) => {}
            None => est.truncated += 1,
        }
    }
    let n = (runs - est.truncated) as f64;
    if n > 0.0 {
        let p = hits as f64 / n;
        est.estimate = p;
        est.std_error = (p * (1.0 - p) / n).sqrt();
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_alleles_are_perfectly_anticorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = 1e-4;
        let n = 200_000;
        let (mut s0, mut s00, mut s01) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let mut st = WfState::new(vec![0.5, 0.5]).unwrap();
            wf_step(&mut st, h, &mut rng);
            let (d0, d1) = (st.values[0] - 0.5, st.values[1] - 0.5);
            s0 += d0;
            s00 += d0 * d0;
            s01 += d0 * d1;
        }
        let nf = n as f64;
        let var = s00 / nf;
        assert!((var / (0.25 * h) - 1.0).abs() < 0.02, "var {var}");
        assert!((s01 / s00 + 1.0).abs() < 1e-9);
        assert!((s0 / nf).abs() < 4.0 * (var / nf).sqrt());
    }

    #[test]
    fn fixed_state_is_absorbing() {
        let mut st = WfState::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(st.is_fixed());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        wf_step(&mut st, 0.01, &mut rng);
        assert_eq!(st.values, vec![1.0, 0.0, 0.0]);
        assert_eq!(st.time, 0.0);
    }

    #[test]
    fn mass_is_exact_after_absorption() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut st = WfState::equal(50).unwrap();
        while !st.is_fixed() {
            wf_step(&mut st, 1e-3, &mut rng);
            let sum: f64 = st.values.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(st.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(st.values.iter().filter(|&&v| v == 1.0).count(), 1);
    }

    #[test]
    fn cov3_degenerate_start() {
        let params = WfRunParams {
            k: 3,
            h: 1e-3,
            seed: 1,
            monitors: ThresholdPair::new(0.25, 0.5).unwrap(),
            bridge_correction: true,
            max_time: 100.0,
        };
        assert_eq!(cov3_mc(0.0, 0.3, 0.5, &params, 100).unwrap().estimate, 0.0);
        assert!(cov3_mc(0.6, 0.3, 0.5, &params, 100).is_err());
    }

    #[test]
    fn monitor_bridge_hits_b_only_from_below() {
        let pair = ThresholdPair::new(0.1, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = MonitorState::starting_at(0.19, &pair);
        // variance large relative to the distances: a hit is almost sure
        monitor_step(&mut m, 0.199999, 0.199999, &pair, 1.0, true, &mut rng);
        assert!(m.reached_b);
        let mut far = MonitorState::starting_at(0.05, &pair);
        monitor_step(&mut far, 0.05, 0.05, &pair, 1e-8, true, &mut rng);
        assert!(!far.reached_b);
    }
}
