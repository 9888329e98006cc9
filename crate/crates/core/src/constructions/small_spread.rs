//! Stage machine for configurations of many small atoms. Each case moves a
//! designated set of components until they are frozen at the case's target
//! levels; the ranked outcome and the downcrossing count of every case are
//! fixed by mass conservation, so the whole machine phase is non-random up to
//! component labels.

use rand::Rng;
use serde::Serialize;

use super::common::{absorb_group, run_to_fixation, Run};
use super::ProgramEvent;
use crate::analytic::{spread_unit, ThresholdPair};
use crate::engine::{ComponentId, Configuration, MonitorStatus, LEVEL_TOL};
use crate::error::Result;

/// Band census of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallSpreadState {
    pub zero: usize,
    /// `(0, a]`
    pub low: usize,
    /// `(a, b)` and potentially mid-downcrossing.
    pub mid_active: usize,
    pub mid_inactive: usize,
    pub at_b: usize,
    /// `(b, 1]`
    pub above: usize,
    pub ranked: Vec<f64>,
    pub downcrossings: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Band {
    Zero,
    Low,
    MidActive,
    MidInactive,
    AtB,
    Above,
}

fn band(config: &Configuration, id: ComponentId, pair: &ThresholdPair) -> Band {
    let c = config.get(id);
    let v = c.value;
    if v <= 0.0 {
        Band::Zero
    } else if v <= pair.a() + LEVEL_TOL {
        Band::Low
    } else if (v - pair.b()).abs() <= LEVEL_TOL {
        Band::AtB
    } else if v > pair.b() {
        Band::Above
    } else if c.monitor.status == MonitorStatus::Active {
        Band::MidActive
    } else {
        Band::MidInactive
    }
}

fn members(config: &Configuration, pair: &ThresholdPair, want: Band) -> Vec<ComponentId> {
    config.alive().filter(|&id| band(config, id, pair) == want).collect()
}

impl SmallSpreadState {
    pub fn of(config: &Configuration, pair: &ThresholdPair) -> Self {
        let mut s = SmallSpreadState {
            zero: 0,
            low: 0,
            mid_active: 0,
            mid_inactive: 0,
            at_b: 0,
            above: 0,
            ranked: config.ranked_values(),
            downcrossings: config.components().iter().map(|c| c.monitor.downcrossings).sum(),
        };
        for c in config.components() {
            match band(config, c.id, pair) {
                Band::Zero => s.zero += 1,
                Band::Low => s.low += 1,
                Band::MidActive => s.mid_active += 1,
                Band::MidInactive => s.mid_inactive += 1,
                Band::AtB => s.at_b += 1,
                Band::Above => s.above += 1,
            }
        }
        s
    }

    /// Components with value in `(0, b]`.
    pub fn in_support_below_b(&self) -> usize {
        self.low + self.mid_active + self.mid_inactive + self.at_b
    }
}

/// Run the machine, then tied stages to fixation. Returns the number of
/// downcrossings accumulated when the machine stopped.
pub(crate) fn run_small_spread<R: Rng>(run: &mut Run<'_, R>, config: &mut Configuration) -> Result<u32> {
    let pair = *run.engine.pair();
    let (a, b) = (pair.a(), pair.b());
    let f = spread_unit(pair.alpha()) as usize;
    loop {
        let at_b = members(config, &pair, Band::AtB);
        if at_b.len() > f {
            // all but one go down to a; the survivor ends above b
            absorb_group(run, config, &at_b, a, 1.0)?;
            let at_a: Vec<ComponentId> = config
                .alive()
                .filter(|&id| (config.value(id) - a).abs() <= LEVEL_TOL)
                .collect();
            absorb_group(run, config, &at_a, 0.0, b)?;
            let above = members(config, &pair, Band::Above);
            if above.len() > 1 {
                absorb_group(run, config, &above, b, 1.0)?;
            }
            continue;
        }
        let active = members(config, &pair, Band::MidActive);
        if active.len() > 2 * f {
            absorb_group(run, config, &active, a, b)?;
            continue;
        }
        let inactive = members(config, &pair, Band::MidInactive);
        if inactive.len() > 2 * f {
            absorb_group(run, config, &inactive, a, b)?;
            continue;
        }
        // a lone member cannot move under mass conservation within the set
        let low = members(config, &pair, Band::Low);
        if low.len() >= f.max(2) {
            absorb_group(run, config, &low, 0.0, b)?;
            continue;
        }
        break;
    }
    let downcrossings = config.components().iter().map(|c| c.monitor.downcrossings).sum();
    run.emit(ProgramEvent::MachineTerminated { downcrossings }, config);
    run_to_fixation(run, config)?;
    Ok(downcrossings)
}
