//! Time-free crossing engine: components, monitors, stages.
//!
//! Only the sequence of level hits is sampled. The law of that sequence does
//! not depend on the dynamics between hits, so the crossing records of staged
//! constructions are exact; nothing is claimed about paths or durations.

mod config;
mod monitor;
mod record;
mod stage;

pub use config::{Component, ComponentId, Configuration, MASS_TOL};
pub use monitor::{MonitorState, MonitorStatus, Threshold, LEVEL_TOL};
pub use record::RunRecord;
pub(crate) use stage::refine_stage_grid;
pub use stage::{
    build_stage_grid, gambler_step, run_stage, AffineMap, Engine, FreezeRule, MoveTracer, StageOutcome, StageSpec,
    DEFAULT_MOVE_BUDGET,
};
