//! Dyadic refinement prefix: start from the depth-`k` refinement of `p` and
//! merge copies back level by level until the configuration is `p` itself.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::common::{run_to_fixation, two_largest, Run};
use super::ProgramEvent;
use crate::engine::{ComponentId, Configuration, MonitorState, LEVEL_TOL};
use crate::error::{Error, Result};

/// Refinement level `m` of a ranked distribution: atom `i` is held as
/// `2^j[i]` copies of `atoms[i] / 2^j[i]`, with `j[i]` minimal such that
/// every copy is at most `2^-m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub m: u32,
    pub atoms: Vec<f64>,
    pub j: Vec<u32>,
}

impl Refinement {
    fn new(atoms: &[f64], m: u32) -> Self {
        let cap = (-(m as f64)).exp2();
        let j = atoms
            .iter()
            .map(|&p| {
                let mut j = 0u32;
                while p / (j as f64).exp2() > cap {
                    j += 1;
                }
                j
            })
            .collect();
        Self {
            m,
            atoms: atoms.to_vec(),
            j,
        }
    }

    /// Copy size of atom `i`.
    pub fn copy(&self, i: usize) -> f64 {
        self.atoms[i] / (self.j[i] as f64).exp2()
    }

    /// All copies, in decreasing order.
    pub fn values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.atoms.len())
            .flat_map(|i| std::iter::repeat_n(self.copy(i), 1usize << self.j[i]))
            .collect();
        v.sort_by(|x, y| y.total_cmp(x));
        v
    }
}

/// `p^0 = p, p^1, ..., p^k`.
pub fn refinement_chain(p: &[f64], k: u32) -> Vec<Refinement> {
    (0..=k).map(|m| Refinement::new(p, m)).collect()
}

/// Components currently holding the copies of each atom.
type Groups = Vec<Vec<ComponentId>>;

pub(crate) fn run_embed<R: Rng>(run: &mut Run<'_, R>, chain: &[Refinement]) -> Result<Configuration> {
    let pair = *run.engine.pair();
    let top = chain
        .last()
        .ok_or_else(|| Error::Precondition("empty refinement chain".into()))?;
    let mut config = Configuration::new(&top.atoms, &pair)?;
    let mut groups: Groups = Vec::with_capacity(top.atoms.len());
    for i in 0..top.atoms.len() {
        let id = ComponentId(i as u32);
        if top.j[i] == 0 {
            groups.push(vec![id]);
        } else {
            groups.push(config.split(id, 1 << top.j[i], &pair));
            // the refined copies replace the atom from time zero
            config.get_mut(id).monitor = MonitorState::default();
        }
    }
    run.emit(ProgramEvent::RefinementLevel { m: top.m }, &config);

    for w in chain.windows(2).rev() {
        let (coarse, fine) = (&w[0], &w[1]);
        for (i, group) in groups.iter_mut().enumerate() {
            if coarse.j[i] == fine.j[i] {
                continue;
            }
            let targets = vec![coarse.copy(i); 1 << coarse.j[i]];
            *group = merge_group(run, &mut config, group, targets)?;
        }
        run.emit(ProgramEvent::RefinementLevel { m: coarse.m }, &config);
    }
    run_to_fixation(run, &mut config)?;
    Ok(config)
}

/// Couple members of `group` pairwise until each target value is held by
/// one member and the others are at 0. Returns the members left holding
/// the targets.
fn merge_group<R: Rng>(
    run: &mut Run<'_, R>,
    config: &mut Configuration,
    group: &[ComponentId],
    mut targets: Vec<f64>,
) -> Result<Vec<ComponentId>> {
    let pair = *run.engine.pair();
    targets.sort_by(f64::total_cmp);
    let mut live: Vec<ComponentId> = group.to_vec();
    let mut done = Vec::with_capacity(targets.len());
    while live.len() > 1 && !targets.is_empty() {
        let t = targets[0];
        let (driver, partner) = two_largest(config, &live);
        config.unfreeze(driver);
        config.unfreeze(partner);
        let s = config.value(driver) + config.value(partner);
        let lo = (s - t).max(0.0);
        let hi = t.min(s);
        run.reflection(config, driver, partner, s, lo, hi)?;
        for id in [driver, partner] {
            let v = config.value(id);
            if (v - t).abs() <= LEVEL_TOL {
                config.snap(id, t, &pair);
                config.freeze(id);
                targets.remove(0);
                live.retain(|&x| x != id);
                done.push(id);
                break;
            }
        }
        live.retain(|&id| config.value(id) > LEVEL_TOL);
    }
    if let (Some(&id), Some(&t)) = (live.first(), targets.first()) {
        config.snap(id, t, &pair);
        done.push(id);
    }
    Ok(done)
}
