//! Stage patterns shared by the constructions.

use rand::Rng;

use super::{ProgramEvent, ProgramObserver};
use crate::engine::{
    refine_stage_grid, AffineMap, ComponentId, Configuration, Engine, StageOutcome, StageSpec, LEVEL_TOL,
};
use crate::error::Result;

/// An engine plus the optional event observer of one run.
pub(crate) struct Run<'h, R: Rng> {
    pub engine: Engine<'h, R>,
    pub observer: Option<&'h mut dyn ProgramObserver>,
}

impl<'h, R: Rng> Run<'h, R> {
    pub fn emit(&mut self, event: ProgramEvent, config: &Configuration) {
        if let Some(obs) = self.observer.as_deref_mut() {
            obs.on_event(&event, config);
        }
    }

    /// Refine the grid, run the stage, report it.
    pub fn stage(&mut self, config: &mut Configuration, mut spec: StageSpec) -> Result<StageOutcome> {
        refine_stage_grid(&mut spec, self.engine.pair());
        let out = self.engine.run_stage(config, &spec)?;
        self.emit(ProgramEvent::StageCompleted, config);
        Ok(out)
    }

    /// Run and report `StageSpec::reflection(driver, partner, sum, lower, upper)`.
    pub fn reflection(
        &mut self,
        config: &mut Configuration,
        driver: ComponentId,
        partner: ComponentId,
        sum: f64,
        lower: f64,
        upper: f64,
    ) -> Result<StageOutcome> {
        let out = self.engine.run_reflection(config, driver, partner, sum, lower, upper)?;
        self.emit(ProgramEvent::StageCompleted, config);
        Ok(out)
    }
}

/// A live member of [`absorb_group`] with its value.
#[derive(Debug, Clone, Copy)]
struct Ranked {
    value: f64,
    id: ComponentId,
}

/// The two largest members, ties broken by id.
pub(crate) fn two_largest(config: &Configuration, members: &[ComponentId]) -> (ComponentId, ComponentId) {
    let better = |x: ComponentId, y: ComponentId| {
        let (vx, vy) = (config.value(x), config.value(y));
        vx > vy || (vx == vy && x < y)
    };
    let (mut first, mut second) = if better(members[0], members[1]) {
        (members[0], members[1])
    } else {
        (members[1], members[0])
    };
    for &id in &members[2..] {
        if better(id, first) {
            second = first;
            first = id;
        } else if better(id, second) {
            second = id;
        }
    }
    (first, second)
}

/// Evolve `members` by pairwise reflection couplings, freezing each member
/// that reaches `lower` or `upper`, until at most one member remains strictly
/// inside. The remainder (if any) is frozen where it ends and returned.
///
/// Every coupling stage freezes at least one member, and the ranked outcome
/// is fixed by mass conservation whatever the random path.
pub(crate) fn absorb_group<R: Rng>(
    run: &mut Run<'_, R>,
    config: &mut Configuration,
    members: &[ComponentId],
    lower: f64,
    upper: f64,
) -> Result<Option<ComponentId>> {
    let pair = *run.engine.pair();
    // freeze a member sitting on a bound; otherwise rank it
    let settle = |config: &mut Configuration, id: ComponentId| {
        let v = config.value(id);
        if v <= lower + LEVEL_TOL {
            config.snap(id, lower, &pair);
            config.freeze(id);
            None
        } else if v >= upper - LEVEL_TOL {
            config.snap(id, upper, &pair);
            config.freeze(id);
            None
        } else {
            Some(Ranked { value: v, id })
        }
    };
    // active[head..] is sorted descending by value then ascending by id, so
    // its first two entries are the members `two_largest` would pick
    let mut active: Vec<Ranked> = Vec::with_capacity(2 * members.len());
    let mut head = 0;
    let insert = |active: &mut Vec<Ranked>, head: usize, r: Option<Ranked>| {
        if let Some(r) = r {
            let before = |x: &Ranked| x.value > r.value || (x.value == r.value && x.id < r.id);
            // remainders are usually the smallest values, so look at the tail first
            let mut k = active.len();
            let floor = k.saturating_sub(16).max(head);
            while k > floor && !before(&active[k - 1]) {
                k -= 1;
            }
            if k == floor {
                k = head + active[head..k].partition_point(before);
            }
            active.insert(k, r);
        }
    };
    for &id in members {
        config.unfreeze(id);
        insert(&mut active, head, settle(config, id));
    }
    // a coupling only moves its own pair, so the others keep their rank
    while active.len() - head >= 2 {
        let driver = active[head].id;
        let partner = active[head + 1].id;
        head += 2;
        let sum = config.value(driver) + config.value(partner);
        let lo = lower.max(sum - upper);
        let hi = upper.min(sum - lower);
        run.reflection(config, driver, partner, sum, lo, hi)?;
        insert(&mut active, head, settle(config, driver));
        insert(&mut active, head, settle(config, partner));
    }
    let remainder = active.get(head).map(|r| r.id);
    if let Some(id) = remainder {
        config.freeze(id);
    }
    Ok(remainder)
}

/// Run `driver` to 0 or 1 with every other living component held
/// proportional to `1 - driver`.
pub(crate) fn tied_stage<R: Rng>(
    run: &mut Run<'_, R>,
    config: &mut Configuration,
    driver: ComponentId,
) -> Result<StageOutcome> {
    let pair = *run.engine.pair();
    let x = config.value(driver);
    if x >= 1.0 - LEVEL_TOL {
        config.snap(driver, 1.0, &pair);
        return Ok(StageOutcome {
            final_level: 1.0,
            moves: 0,
        });
    }
    config.unfreeze(driver);
    let others: Vec<ComponentId> = config.alive().filter(|&id| id != driver).collect();
    // shares of the others' actual total, so the slopes cancel the driver's
    // exactly even after rounding drift in the stored values
    let rest: f64 = others.iter().map(|&id| config.value(id)).sum();
    let mut tied = Vec::with_capacity(others.len());
    for id in others {
        config.unfreeze(id);
        let c = config.value(id) / rest;
        tied.push((id, AffineMap { offset: c, slope: -c }));
    }
    let spec = StageSpec::new(driver, tied, vec![0.0, 1.0], vec![])?;
    run.stage(config, spec)
}

/// Tied stages on the largest living component until one component holds
/// all the mass.
pub(crate) fn run_to_fixation<R: Rng>(run: &mut Run<'_, R>, config: &mut Configuration) -> Result<()> {
    let pair = *run.engine.pair();
    loop {
        if config.winner().is_some() {
            return Ok(());
        }
        let ranked = config.ranked_ids();
        if ranked.len() == 1 {
            config.snap(ranked[0], 1.0, &pair);
            return Ok(());
        }
        tied_stage(run, config, ranked[0])?;
    }
}
