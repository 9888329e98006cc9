use serde::{Deserialize, Serialize};

use super::config::{ComponentId, Configuration};
use super::monitor::MonitorState;
use crate::error::{Error, Result};

/// One sampled realization of a construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n_b: u32,
    pub d_ab: u32,
    pub winner_id: ComponentId,
    pub per_component: Vec<(ComponentId, MonitorState)>,
    pub stages_executed: u64,
    pub moves: u64,
    /// Downcrossings accumulated before a program-specific checkpoint
    /// (the end of the small-spread stage machine).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub checkpoint_d_ab: Option<u32>,
}

impl RunRecord {
    /// Read the crossing tallies off a fixated configuration.
    pub fn from_fixation(config: &Configuration, stages: u64, moves: u64) -> Result<Self> {
        let winner_id = config
            .winner()
            .ok_or_else(|| Error::Consistency("run ended without a unique component at 1".into()))?;
        let mut n_b = 0;
        let mut d_ab = 0;
        let per_component = config
            .components()
            .iter()
            .map(|c| {
                n_b += c.monitor.reached_b as u32;
                d_ab += c.monitor.downcrossings;
                (c.id, c.monitor)
            })
            .collect();
        let winner = config.get(winner_id);
        if !winner.monitor.reached_b {
            return Err(Error::Consistency(format!(
                "winner {winner_id} never registered reaching b"
            )));
        }
        Ok(Self {
            n_b,
            d_ab,
            winner_id,
            per_component,
            stages_executed: stages,
            moves,
            checkpoint_d_ab: None,
        })
    }
}
