//! Tied sequential construction on the geometric profile `b0 (1 - b0)^(i-1)`.

use rand::Rng;

use super::common::{tied_stage, Run};
use super::ProgramEvent;
use crate::engine::{ComponentId, Configuration};
use crate::error::Result;

/// Tail mass below which the profile is cut; the last atom takes the rest.
const TAIL_MASS: f64 = 1e-12;

/// Atoms `b0 (1 - b0)^(i-1)` until the remaining mass drops below `1e-12`,
/// which is folded into the last atom.
pub fn geometric_profile(b0: f64) -> Vec<f64> {
    let mut atoms = Vec::new();
    let mut rem = 1.0;
    loop {
        let atom = b0 * rem;
        if rem - atom < TAIL_MASS {
            atoms.push(rem);
            return atoms;
        }
        atoms.push(atom);
        rem -= atom;
    }
}

/// Examine components in id order: each runs to 0 or 1 with the later ones
/// tied to it. Every examined driver starts at `b0`.
pub(crate) fn run_sequential<R: Rng>(run: &mut Run<'_, R>, config: &mut Configuration) -> Result<()> {
    for i in 0..config.len() {
        let id = ComponentId(i as u32);
        if config.value(id) <= 0.0 {
            continue;
        }
        run.emit(
            ProgramEvent::DriverExamined {
                id,
                value: config.value(id),
            },
            config,
        );
        let out = tied_stage(run, config, id)?;
        if out.final_level >= 1.0 {
            break;
        }
    }
    Ok(())
}
