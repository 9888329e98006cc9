//! "Shorten the list" constructions: components are frozen at `b` (or at a
//! rising common level) until the list cannot shrink further.

use rand::Rng;

use super::common::{absorb_group, run_to_fixation, Run};
use super::ProgramEvent;
use crate::engine::{ComponentId, Configuration, LEVEL_TOL};
use crate::error::Result;

/// Freeze components at `b` pairwise until one residual below `b` remains,
/// let the residual try for `b` against a component parked there, then run
/// to fixation. `N_b` only takes the values `floor(1/b)` and `ceil(1/b)`.
pub(crate) fn run_survivor<R: Rng>(run: &mut Run<'_, R>, config: &mut Configuration) -> Result<()> {
    let b = run.engine.pair().b();
    let below: Vec<ComponentId> = config.alive().filter(|&id| config.value(id) < b - LEVEL_TOL).collect();
    let residual = absorb_group(run, config, &below, 0.0, b)?;

    if let Some(r) = residual {
        let parked = config.alive().find(|&id| (config.value(id) - b).abs() <= LEVEL_TOL);
        if let Some(partner) = parked {
            config.unfreeze(r);
            config.unfreeze(partner);
            let x = config.value(r);
            run.reflection(config, r, partner, x + b, 0.0, b)?;
        }
    }
    run_to_fixation(run, config)
}

/// Survivor started from `m0` equal components: stage `m` takes `m` components
/// at `1/m` to `m - 1` components at `1/(m-1)` and one at 0, until
/// `ceil(1/b)` remain; then the plain survivor construction takes over.
pub(crate) fn run_survivor_zero_prefix<R: Rng>(
    run: &mut Run<'_, R>,
    config: &mut Configuration,
    m0: usize,
) -> Result<()> {
    let b = run.engine.pair().b();
    let m_stop = (1.0 / b - 1e-9).ceil() as usize;
    run.emit(ProgramEvent::EqualSplit { m: m0 }, config);
    let mut m = m0;
    let mut members: Vec<ComponentId> = Vec::with_capacity(m0);
    while m > m_stop.max(2) {
        let target = 1.0 / (m - 1) as f64;
        members.clear();
        members.extend(config.alive());
        absorb_group(run, config, &members, 0.0, target)?;
        m -= 1;
        run.emit(ProgramEvent::EqualSplit { m }, config);
    }
    run_survivor(run, config)
}
