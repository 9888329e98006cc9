use std::fmt;

use serde::{Deserialize, Serialize};

use super::monitor::{MonitorState, LEVEL_TOL};
use crate::analytic::ThresholdPair;
use crate::error::{Error, Result};

/// Mass may drift from the configured total by at most this much.
pub const MASS_TOL: f64 = 1e-9;

/// Stable label of a component martingale. Ids index the configuration and
/// are never reused; components that die stay in place at value 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComponentId(pub u32);

impl ComponentId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: ComponentId,
    pub value: f64,
    pub frozen: bool,
    pub monitor: MonitorState,
    /// Set when this component was created by splitting another one.
    pub parent: Option<ComponentId>,
}

/// Live state of a feasible process.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    components: Vec<Component>,
    total: f64,
}

impl Configuration {
    /// Build a configuration from initial values that sum to 1.
    pub fn new(values: &[f64], pair: &ThresholdPair) -> Result<Self> {
        Self::with_total(values, 1.0, pair)
    }

    pub fn with_total(values: &[f64], total: f64, pair: &ThresholdPair) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("configuration needs at least one component".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Precondition(format!("component value {v} outside [0, 1]")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - total).abs() > MASS_TOL {
            return Err(Error::Precondition(format!(
                "initial values sum to {sum}, expected {total}"
            )));
        }
        if values.iter().filter(|&&v| v >= 1.0 - LEVEL_TOL).count() > 1 {
            return Err(Error::Precondition("more than one component at 1".into()));
        }
        let components = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Component {
                id: ComponentId(i as u32),
                value: v,
                frozen: false,
                monitor: MonitorState::starting_at(v, pair),
                parent: None,
            })
            .collect();
        Ok(Self { components, total })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn contains(&self, id: ComponentId) -> bool {
        id.index() < self.components.len()
    }

    #[inline]
    pub fn get(&self, id: ComponentId) -> &Component {
        &self.components[id.index()]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ComponentId) -> &mut Component {
        &mut self.components[id.index()]
    }

    #[inline]
    pub fn value(&self, id: ComponentId) -> f64 {
        self.components[id.index()].value
    }

    pub fn freeze(&mut self, id: ComponentId) {
        self.get_mut(id).frozen = true;
    }

    pub fn unfreeze(&mut self, id: ComponentId) {
        self.get_mut(id).frozen = false;
    }

    /// Move a component to `level` without passing any threshold in between
    /// (used to remove rounding residue of at most `LEVEL_TOL`).
    pub fn snap(&mut self, id: ComponentId, level: f64, pair: &ThresholdPair) {
        let c = self.get_mut(id);
        debug_assert!((c.value - level).abs() <= 1e-9, "snap moved {} -> {}", c.value, level);
        c.value = level;
        c.monitor.observe(level, pair);
    }

    /// Split a component into `parts` equal fresh components, recording the
    /// parent. The parent stays in place at value 0 and keeps its history;
    /// the children start fresh monitors.
    pub fn split(&mut self, id: ComponentId, parts: usize, pair: &ThresholdPair) -> Vec<ComponentId> {
        assert!(parts >= 1);
        let share = self.value(id) / parts as f64;
        let mut ids = Vec::with_capacity(parts);
        for _ in 0..parts {
            let new_id = ComponentId(self.components.len() as u32);
            let monitor = MonitorState::starting_at(share, pair);
            self.components.push(Component {
                id: new_id,
                value: share,
                frozen: false,
                monitor,
                parent: Some(id),
            });
            ids.push(new_id);
        }
        let p = self.get_mut(id);
        p.value = 0.0;
        p.frozen = true;
        ids
    }

    /// Ids of components with positive value, in id order.
    pub fn alive(&self) -> impl Iterator<Item = ComponentId> + '_ {
        self.components.iter().filter(|c| c.value > 0.0).map(|c| c.id)
    }

    pub fn sum(&self) -> f64 {
        self.components.iter().map(|c| c.value).sum()
    }

    /// The component at 1 when every other component is at 0.
    pub fn winner(&self) -> Option<ComponentId> {
        let mut winner = None;
        for c in &self.components {
            if c.value >= 1.0 - LEVEL_TOL {
                if winner.is_some() {
                    return None;
                }
                winner = Some(c.id);
            } else if c.value > LEVEL_TOL {
                return None;
            }
        }
        winner
    }

    /// Nonzero values in decreasing order.
    pub fn ranked_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.components.iter().map(|c| c.value).filter(|&v| v > 0.0).collect();
        v.sort_by(|x, y| y.total_cmp(x));
        v
    }

    /// Alive ids ordered by decreasing value, ties broken by id.
    pub fn ranked_ids(&self) -> Vec<ComponentId> {
        let mut ids: Vec<ComponentId> = self.alive().collect();
        ids.sort_by(|x, y| self.value(*y).total_cmp(&self.value(*x)).then(x.cmp(y)));
        ids
    }

    /// Mass conservation, range and single-winner checks.
    pub fn check_invariants(&self) -> Result<()> {
        let sum = self.sum();
        if (sum - self.total).abs() > MASS_TOL {
            return Err(Error::Consistency(format!(
                "mass {sum} drifted from total {}",
                self.total
            )));
        }
        if let Some(c) = self.components.iter().find(|c| !(0.0..=1.0).contains(&c.value)) {
            return Err(Error::Consistency(format!(
                "component {} at {} outside [0, 1]",
                c.id, c.value
            )));
        }
        if self.components.iter().filter(|c| c.value >= 1.0 - LEVEL_TOL).count() > 1 {
            return Err(Error::Consistency("two components at 1".into()));
        }
        Ok(())
    }
}
