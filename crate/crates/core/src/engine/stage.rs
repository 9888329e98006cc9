//! Stage specifications and the exact level-to-level stage runner.
//!
//! A stage moves one driver component along a grid of levels; every other
//! participating component is an affine function of the driver. Between two
//! adjacent grid levels a continuous martingale reaches either neighbour with
//! the gambler's-ruin probabilities, so walking the grid samples the exact
//! law of the level-hit sequence without simulating time.

use std::collections::VecDeque;

use rand::Rng;

use super::config::{ComponentId, Configuration, MASS_TOL};
use super::monitor::{MonitorStatus, Threshold, LEVEL_TOL};
use crate::analytic::ThresholdPair;
use crate::error::{Error, Result};

pub const DEFAULT_MOVE_BUDGET: u64 = 10_000_000;

/// `value = offset + slope * driver`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub offset: f64,
    pub slope: f64,
}

impl AffineMap {
    /// Partner of a reflection coupling whose pair sum is `sum`.
    pub fn reflection(sum: f64) -> Self {
        Self {
            offset: sum,
            slope: -1.0,
        }
    }

    /// Component held proportional to `1 - driver`, currently at `value`
    /// while the driver is at `driver_value`.
    pub fn tied(value: f64, driver_value: f64) -> Self {
        let c = value / (1.0 - driver_value);
        Self { offset: c, slope: -c }
    }

    #[inline]
    pub fn eval(&self, driver: f64) -> f64 {
        self.offset + self.slope * driver
    }

    /// Driver level at which the mapped value equals `target`; `None` for a
    /// constant map.
    #[inline]
    pub fn preimage(&self, target: f64) -> Option<f64> {
        if self.slope == 0.0 {
            None
        } else {
            Some((target - self.offset) / self.slope)
        }
    }
}

/// Components frozen when the driver arrives at `level`. A level carrying a
/// rule ends the stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FreezeRule {
    pub level: f64,
    pub ids: Vec<ComponentId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    pub driver: ComponentId,
    pub tied: Vec<(ComponentId, AffineMap)>,
    /// Strictly increasing driver levels; the first and last bound the
    /// driver's reachable range.
    pub stop_levels: Vec<f64>,
    pub freeze_rules: Vec<FreezeRule>,
}

impl StageSpec {
    /// Sorts and merges `stop_levels`; rejects fewer than two distinct levels.
    pub fn new(
        driver: ComponentId,
        tied: Vec<(ComponentId, AffineMap)>,
        stop_levels: Vec<f64>,
        freeze_rules: Vec<FreezeRule>,
    ) -> Result<Self> {
        let stop_levels = merge_levels(stop_levels);
        if stop_levels.len() < 2 {
            return Err(Error::Precondition(
                "a stage needs at least two distinct stop levels".into(),
            ));
        }
        Ok(Self {
            driver,
            tied,
            stop_levels,
            freeze_rules,
        })
    }

    /// Reflection coupling of `driver` and `partner` (pair sum `sum`), stopped
    /// when the driver reaches `lower` or `upper`; both ends are terminal.
    pub fn reflection(driver: ComponentId, partner: ComponentId, sum: f64, lower: f64, upper: f64) -> Result<Self> {
        Self::new(
            driver,
            vec![(partner, AffineMap::reflection(sum))],
            vec![lower, upper],
            vec![
                FreezeRule {
                    level: lower,
                    ids: vec![],
                },
                FreezeRule {
                    level: upper,
                    ids: vec![],
                },
            ],
        )
    }

    pub fn range(&self) -> (f64, f64) {
        (self.stop_levels[0], *self.stop_levels.last().unwrap())
    }
}

fn is_terminal(rules: &[FreezeRule], level: f64) -> bool {
    rules.iter().any(|r| (r.level - level).abs() <= LEVEL_TOL)
}

/// Sort, drop non-finite entries and merge levels closer than `LEVEL_TOL`
/// (the first of a cluster is kept).
fn merge_levels(mut levels: Vec<f64>) -> Vec<f64> {
    merge_in_place(&mut levels);
    levels
}

fn merge_in_place(levels: &mut Vec<f64>) {
    levels.retain(|l| l.is_finite());
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|l, kept| *l - *kept <= LEVEL_TOL);
}

/// Add the driver levels at which any participant arrives at `a` or `b` to
/// `grid`, leaving existing levels in place. `extra` is scratch space.
fn refine_levels(grid: &mut Vec<f64>, extra: &mut Vec<f64>, tied: &[(ComponentId, AffineMap)], pair: &ThresholdPair) {
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let in_range = |g: f64| g >= lo - LEVEL_TOL && g <= hi + LEVEL_TOL;
    extra.clear();
    for t in [pair.a(), pair.b()] {
        if in_range(t) {
            extra.push(t.clamp(lo, hi));
        }
        for (_, map) in tied {
            if let Some(g) = map.preimage(t) {
                if in_range(g) {
                    extra.push(g.clamp(lo, hi));
                }
            }
        }
    }
    merge_in_place(extra);
    extra.retain(|&l| {
        let k = grid.partition_point(|&g| g < l);
        let near_left = k > 0 && (l - grid[k - 1]).abs() <= LEVEL_TOL;
        let near_right = k < grid.len() && (grid[k] - l).abs() <= LEVEL_TOL;
        !(near_left || near_right)
    });
    if !extra.is_empty() {
        grid.extend_from_slice(extra);
        grid.sort_by(f64::total_cmp);
    }
}

/// Index of a grid level within `LEVEL_TOL` of `x`.
fn find_level(grid: &[f64], x: f64) -> Option<usize> {
    let k = grid.partition_point(|&g| g < x);
    if k < grid.len() && (grid[k] - x).abs() <= LEVEL_TOL {
        return Some(k);
    }
    if k > 0 && (x - grid[k - 1]).abs() <= LEVEL_TOL {
        return Some(k - 1);
    }
    None
}

/// Refine a stage's grid so every arrival of any participant at `a` or `b`
/// happens at a grid level.
pub fn build_stage_grid(spec: &StageSpec, pair: &ThresholdPair) -> StageSpec {
    let mut out = spec.clone();
    refine_stage_grid(&mut out, pair);
    out
}

/// [`build_stage_grid`] in place.
pub(crate) fn refine_stage_grid(spec: &mut StageSpec, pair: &ThresholdPair) {
    refine_levels(&mut spec.stop_levels, &mut Vec::new(), &spec.tied, pair);
}

/// One exact level hit: from `x` in `[lower, upper]`, return the level the
/// martingale reaches first.
pub fn gambler_step<R: Rng + ?Sized>(rng: &mut R, x: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(lower < upper) {
        return Err(Error::Domain(format!("degenerate interval [{lower}, {upper}]")));
    }
    if !(lower <= x && x <= upper) {
        return Err(Error::Domain(format!("start {x} outside [{lower}, {upper}]")));
    }
    let p_up = (x - lower) / (upper - lower);
    Ok(if rng.random::<f64>() < p_up { upper } else { lower })
}

/// Receives one row per moving component after every elementary move.
pub trait MoveTracer {
    fn record(&mut self, stage: u64, id: ComponentId, value: f64, status: MonitorStatus);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageOutcome {
    /// Driver level at which the stage stopped.
    pub final_level: f64,
    pub moves: u64,
}

#[derive(Debug, Clone, Copy)]
struct StageNote {
    driver: ComponentId,
    tied: usize,
    start: f64,
    lo: f64,
    hi: f64,
}

const DRIVER: u32 = u32::MAX;

/// Buffers reused across stages.
#[derive(Debug, Default)]
struct Scratch {
    events: Vec<(u32, u32, Threshold)>,
}
const RECENT_STAGES: usize = 8;

/// Executes stages against a configuration, counting moves against a budget.
pub struct Engine<'h, R: Rng> {
    pair: ThresholdPair,
    rng: R,
    budget: u64,
    moves: u64,
    stages: u64,
    tracer: Option<&'h mut dyn MoveTracer>,
    recent: VecDeque<StageNote>,
    scratch: Scratch,
}

impl<'h, R: Rng> Engine<'h, R> {
    pub fn new(pair: ThresholdPair, rng: R) -> Self {
        Self {
            pair,
            rng,
            budget: DEFAULT_MOVE_BUDGET,
            moves: 0,
            stages: 0,
            tracer: None,
            recent: VecDeque::with_capacity(RECENT_STAGES),
            scratch: Scratch::default(),
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_tracer(mut self, tracer: &'h mut dyn MoveTracer) -> Self {
        self.tracer = Some(tracer);
        self
    }

    pub fn pair(&self) -> &ThresholdPair {
        &self.pair
    }

    pub fn rng(&mut self) -> &mut R {
        &mut self.rng
    }

    pub fn moves(&self) -> u64 {
        self.moves
    }

    pub fn stages(&self) -> u64 {
        self.stages
    }

    fn runaway(&self) -> Error {
        let trace = self
            .recent
            .iter()
            .map(|n| {
                format!(
                    "driver {} from {:.6} on [{:.6}, {:.6}] with {} tied",
                    n.driver, n.start, n.lo, n.hi, n.tied
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        Error::Runaway {
            budget: self.budget,
            trace: format!("last stages: {trace}"),
        }
    }

    /// Run one stage. The spec must already carry the threshold preimages
    /// (see [`build_stage_grid`]); a threshold arrival strictly between grid
    /// levels is reported as a consistency error.
    pub fn run_stage(&mut self, config: &mut Configuration, spec: &StageSpec) -> Result<StageOutcome> {
        let mut scratch = std::mem::take(&mut self.scratch);
        let out = self.execute(
            &mut scratch,
            config,
            spec.driver,
            &spec.tied,
            &spec.stop_levels,
            &spec.freeze_rules,
        );
        self.scratch = scratch;
        out
    }

    /// Refine and run `StageSpec::reflection(driver, partner, sum, lower,
    /// upper)` without building the spec. Draws, results and monitor updates
    /// match [`build_stage_grid`] followed by [`run_stage`](Self::run_stage).
    pub fn run_reflection(
        &mut self,
        config: &mut Configuration,
        driver: ComponentId,
        partner: ComponentId,
        sum: f64,
        lower: f64,
        upper: f64,
    ) -> Result<StageOutcome> {
        let pair = self.pair;
        let map = AffineMap::reflection(sum);
        if !(lower.is_finite() && upper.is_finite()) || (upper - lower).abs() <= LEVEL_TOL {
            return Err(Error::Precondition(
                "a stage needs at least two distinct stop levels".into(),
            ));
        }
        let (lo, hi) = if upper < lower { (upper, lower) } else { (lower, upper) };

        // the two ends plus every threshold arrival of either member
        let in_range = |g: f64| g >= lo - LEVEL_TOL && g <= hi + LEVEL_TOL;
        let mut extra = [0.0; 4];
        let mut n_extra = 0;
        for t in [pair.a(), pair.b()] {
            for g in [Some(t), map.preimage(t)].into_iter().flatten() {
                if in_range(g) {
                    extra[n_extra] = g.clamp(lo, hi);
                    n_extra += 1;
                }
            }
        }
        let extra = &mut extra[..n_extra];
        extra.sort_by(f64::total_cmp);
        let mut grid = [0.0; 6];
        grid[0] = lo;
        grid[1] = hi;
        let mut n = 2;
        let mut kept = f64::NAN;
        for &l in extra.iter() {
            if l - kept <= LEVEL_TOL {
                continue;
            }
            kept = l;
            if (l - lo).abs() > LEVEL_TOL && (hi - l).abs() > LEVEL_TOL {
                grid[n] = l;
                n += 1;
            }
        }
        let grid = &mut grid[..n];
        grid.sort_by(f64::total_cmp);
        let grid: &[f64] = grid;
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition("stop levels must be strictly increasing".into()));
        }

        if !config.contains(driver) {
            return Err(Error::Precondition(format!("unknown driver {driver}")));
        }
        if config.get(driver).frozen {
            return Err(Error::Precondition(format!("driver {driver} is frozen")));
        }
        let x0 = config.value(driver);
        if x0 < lo - LEVEL_TOL || x0 > hi + LEVEL_TOL {
            return Err(Error::Precondition(format!(
                "driver {driver} at {x0} outside its stop range [{lo}, {hi}]"
            )));
        }
        if !config.contains(partner) || partner == driver {
            return Err(Error::Precondition(format!("invalid tied component {partner}")));
        }
        let c = config.get(partner);
        if c.frozen {
            return Err(Error::Precondition(format!("tied component {partner} is frozen")));
        }
        if (map.eval(x0) - c.value).abs() > MASS_TOL {
            return Err(Error::Precondition(format!(
                "tied map of {partner} gives {} but the component is at {}",
                map.eval(x0),
                c.value
            )));
        }
        for g in [lo, hi] {
            let v = map.eval(g);
            if !(-LEVEL_TOL..=1.0 + LEVEL_TOL).contains(&v) {
                return Err(Error::Precondition(format!(
                    "tied component {partner} would leave [0, 1] (value {v} at driver level {g})"
                )));
            }
        }

        // threshold arrivals as (level, member, kind), in the order run_stage
        // applies them
        let mut events = [(0usize, driver, Threshold::Lower); 4];
        let mut n_events = 0;
        for (t, kind) in [(pair.a(), Threshold::Lower), (pair.b(), Threshold::Upper)] {
            for (id, g) in [(driver, Some(t)), (partner, map.preimage(t))] {
                let Some(g) = g.filter(|&g| in_range(g)) else { continue };
                match find_level(grid, g) {
                    Some(k) => {
                        events[n_events] = (k, id, kind);
                        n_events += 1;
                    }
                    None => {
                        return Err(Error::Consistency(format!(
                            "component {id} crosses {t} at driver level {g}, between grid levels"
                        )))
                    }
                }
            }
        }
        let events = &events[..n_events];

        if self.recent.len() == RECENT_STAGES {
            self.recent.pop_front();
        }
        self.recent.push_back(StageNote {
            driver,
            tied: 1,
            start: x0,
            lo,
            hi,
        });

        let last = grid.len() - 1;
        let terminal = |k: usize| {
            k == 0 || k == last || (lower - grid[k]).abs() <= LEVEL_TOL || (upper - grid[k]).abs() <= LEVEL_TOL
        };
        let mut at = find_level(grid, x0);
        let mut between = match at {
            Some(_) => 0,
            None => grid.partition_point(|&g| g < x0) - 1,
        };
        let (mut gmin, mut gmax) = (x0, x0);
        let mut moves = 0u64;
        let stage_no = self.stages;
        let final_k = loop {
            if let Some(k) = at {
                if terminal(k) {
                    break k;
                }
            }
            let (x, left, right) = match at {
                Some(k) => (grid[k], k - 1, k + 1),
                None => (x0.clamp(grid[between], grid[between + 1]), between, between + 1),
            };
            let up = gambler_step(&mut self.rng, x, grid[left], grid[right])? == grid[right];
            let k = if up { right } else { left };
            at = Some(k);
            between = 0;
            moves += 1;
            self.moves += 1;
            if self.moves > self.budget {
                return Err(self.runaway());
            }
            let g = grid[k];
            gmin = gmin.min(g);
            gmax = gmax.max(g);
            for &(_, id, kind) in events.iter().filter(|e| e.0 == k) {
                config.get_mut(id).monitor.hit(kind);
            }
            if let Some(tracer) = self.tracer.as_deref_mut() {
                tracer.record(stage_no, driver, g, config.get(driver).monitor.status);
                let c = config.get(partner);
                tracer.record(stage_no, partner, map.eval(g).clamp(0.0, 1.0), c.monitor.status);
            }
        };

        let g = grid[final_k];
        {
            let d = config.get_mut(driver);
            d.value = g;
            d.monitor.note_sup(gmax);
        }
        {
            let c = config.get_mut(partner);
            c.value = snap_unit(map.eval(g));
            c.monitor.note_sup(map.eval(gmin).max(map.eval(gmax)));
        }
        for &(_, id, kind) in events.iter().filter(|e| e.0 == final_k) {
            config.get_mut(id).value = match kind {
                Threshold::Lower => pair.a(),
                Threshold::Upper => pair.b(),
            };
        }
        self.stages += 1;
        Ok(StageOutcome { final_level: g, moves })
    }

    fn execute(
        &mut self,
        scratch: &mut Scratch,
        config: &mut Configuration,
        driver: ComponentId,
        tied: &[(ComponentId, AffineMap)],
        grid: &[f64],
        rules: &[FreezeRule],
    ) -> Result<StageOutcome> {
        let pair = self.pair;
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition("stop levels must be strictly increasing".into()));
        }
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        if !config.contains(driver) {
            return Err(Error::Precondition(format!("unknown driver {driver}")));
        }
        if config.get(driver).frozen {
            return Err(Error::Precondition(format!("driver {driver} is frozen")));
        }
        let x0 = config.value(driver);
        if x0 < lo - LEVEL_TOL || x0 > hi + LEVEL_TOL {
            return Err(Error::Precondition(format!(
                "driver {driver} at {x0} outside its stop range [{lo}, {hi}]"
            )));
        }
        let mut slope_sum = 1.0;
        for (id, map) in tied {
            if !config.contains(*id) || *id == driver {
                return Err(Error::Precondition(format!("invalid tied component {id}")));
            }
            let c = config.get(*id);
            if c.frozen {
                return Err(Error::Precondition(format!("tied component {id} is frozen")));
            }
            if (map.eval(x0) - c.value).abs() > MASS_TOL {
                return Err(Error::Precondition(format!(
                    "tied map of {id} gives {} but the component is at {}",
                    map.eval(x0),
                    c.value
                )));
            }
            for g in [lo, hi] {
                let v = map.eval(g);
                if !(-LEVEL_TOL..=1.0 + LEVEL_TOL).contains(&v) {
                    return Err(Error::Precondition(format!(
                        "tied component {id} would leave [0, 1] (value {v} at driver level {g})"
                    )));
                }
            }
            slope_sum += map.slope;
        }

        // a driver parked on a terminal level never moves
        let start = find_level(grid, x0);
        let parked = start.is_some_and(|k| k == 0 || k == grid.len() - 1 || is_terminal(rules, grid[k]));
        if slope_sum.abs() > MASS_TOL && !parked {
            return Err(Error::Precondition(format!(
                "stage does not conserve mass (driver plus tied slopes sum to {slope_sum})"
            )));
        }

        // threshold arrivals, bucketed per grid level
        let events = &mut scratch.events;
        events.clear();
        for (t, kind) in [(pair.a(), Threshold::Lower), (pair.b(), Threshold::Upper)] {
            if t >= lo - LEVEL_TOL && t <= hi + LEVEL_TOL {
                match find_level(grid, t) {
                    Some(k) => events.push((k as u32, DRIVER, kind)),
                    None => return Err(Error::Consistency(format!("driver crosses {t} between grid levels"))),
                }
            }
            for (i, (id, map)) in tied.iter().enumerate() {
                let Some(g) = map.preimage(t) else { continue };
                if g < lo - LEVEL_TOL || g > hi + LEVEL_TOL {
                    continue;
                }
                match find_level(grid, g) {
                    Some(k) => events.push((k as u32, i as u32, kind)),
                    None => {
                        return Err(Error::Consistency(format!(
                            "tied component {id} crosses {t} at driver level {g}, between grid levels"
                        )))
                    }
                }
            }
        }
        events.sort_by_key(|e| e.0);
        let events: &[(u32, u32, Threshold)] = events;
        let bucket = |k: usize| {
            let from = events.partition_point(|e| (e.0 as usize) < k);
            let to = events.partition_point(|e| (e.0 as usize) <= k);
            &events[from..to]
        };
        let last = grid.len() - 1;
        let terminal = |k: usize| k == 0 || k == last || is_terminal(rules, grid[k]);

        if self.recent.len() == RECENT_STAGES {
            self.recent.pop_front();
        }
        self.recent.push_back(StageNote {
            driver,
            tied: tied.len(),
            start: x0,
            lo,
            hi,
        });

        // Level(k) or strictly between k and k+1
        let mut at = start;
        let mut between = match at {
            Some(_) => 0,
            None => grid.partition_point(|&g| g < x0) - 1,
        };
        let (mut gmin, mut gmax) = (x0, x0);
        let mut moves = 0u64;
        let stage_no = self.stages;
        let final_k = loop {
            if let Some(k) = at {
                if terminal(k) {
                    break k;
                }
            }
            let (x, left, right) = match at {
                Some(k) => (grid[k], k - 1, k + 1),
                None => (x0.clamp(grid[between], grid[between + 1]), between, between + 1),
            };
            let up = gambler_step(&mut self.rng, x, grid[left], grid[right])? == grid[right];
            let k = if up { right } else { left };
            at = Some(k);
            between = 0;
            moves += 1;
            self.moves += 1;
            if self.moves > self.budget {
                return Err(self.runaway());
            }
            let g = grid[k];
            gmin = gmin.min(g);
            gmax = gmax.max(g);
            for &(_, who, kind) in bucket(k) {
                let id = if who == DRIVER { driver } else { tied[who as usize].0 };
                config.get_mut(id).monitor.hit(kind);
            }
            if let Some(tracer) = self.tracer.as_deref_mut() {
                let d = config.get(driver);
                tracer.record(stage_no, driver, g, d.monitor.status);
                for (id, map) in tied {
                    let c = config.get(*id);
                    tracer.record(stage_no, *id, map.eval(g).clamp(0.0, 1.0), c.monitor.status);
                }
            }
        };

        let g = grid[final_k];
        {
            let d = config.get_mut(driver);
            d.value = g;
            d.monitor.note_sup(gmax);
        }
        for (id, map) in tied {
            let v = snap_unit(map.eval(g));
            let sup = map.eval(gmin).max(map.eval(gmax));
            let c = config.get_mut(*id);
            c.value = v;
            c.monitor.note_sup(sup);
        }
        // values that arrived exactly at a threshold sit on it
        for &(_, who, kind) in bucket(final_k) {
            let level = match kind {
                Threshold::Lower => pair.a(),
                Threshold::Upper => pair.b(),
            };
            let id = if who == DRIVER { driver } else { tied[who as usize].0 };
            config.get_mut(id).value = level;
        }
        for rule in rules {
            if (rule.level - g).abs() <= LEVEL_TOL {
                for id in &rule.ids {
                    config.freeze(*id);
                }
            }
        }
        self.stages += 1;
        Ok(StageOutcome { final_level: g, moves })
    }
}

#[inline]
fn snap_unit(v: f64) -> f64 {
    if v <= LEVEL_TOL {
        0.0
    } else if v >= 1.0 - LEVEL_TOL {
        1.0
    } else {
        v
    }
}

/// Run a single stage with the default move budget.
pub fn run_stage<R: Rng>(
    config: &mut Configuration,
    spec: &StageSpec,
    pair: &ThresholdPair,
    rng: &mut R,
) -> Result<StageOutcome> {
    let mut engine = Engine::new(*pair, &mut *rng);
    engine.run_stage(config, spec)
}
