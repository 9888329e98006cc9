//! The extremal constructions, compiled into engine stages.
//!
//! A [`ConstructionProgram`] is immutable and can be shared by any number of
//! concurrent runs; [`run_program`] samples one realization.

mod common;
mod embed;
mod sequential;
mod small_spread;
mod survivor;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::ThresholdPair;
use crate::engine::{ComponentId, Configuration, Engine, MoveTracer, RunRecord, DEFAULT_MOVE_BUDGET};
use crate::error::{Error, Result};

pub use embed::{refinement_chain, Refinement};
pub use sequential::geometric_profile;
pub use small_spread::SmallSpreadState;

use common::Run;

/// Tolerance on the initial mass and on the `max p_i <= b` preconditions.
const PARAM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramKind {
    Survivor,
    SurvivorZeroPrefix,
    Sequential,
    SmallSpread,
    EmbedPrefix,
}

impl ProgramKind {
    pub const ALL: [ProgramKind; 5] = [
        ProgramKind::Survivor,
        ProgramKind::SurvivorZeroPrefix,
        ProgramKind::Sequential,
        ProgramKind::SmallSpread,
        ProgramKind::EmbedPrefix,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProgramKind::Survivor => "survivor",
            ProgramKind::SurvivorZeroPrefix => "survivor_zero_prefix",
            ProgramKind::Sequential => "sequential",
            ProgramKind::SmallSpread => "small_spread",
            ProgramKind::EmbedPrefix => "embed_prefix",
        }
    }
}

impl std::str::FromStr for ProgramKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProgramKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.replace('-', "_"))
            .ok_or_else(|| Error::Domain(format!("unknown program kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProgramParams {
    Survivor { initial: Vec<f64> },
    SurvivorZeroPrefix { m0: usize },
    Sequential { b0: f64, initial: Vec<f64> },
    SmallSpread { initial: Vec<f64> },
    EmbedPrefix { chain: Vec<Refinement> },
}

/// A compiled construction: thresholds plus validated kind-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionProgram {
    pub pair: ThresholdPair,
    pub params: ProgramParams,
}

/// `n` equal atoms of mass `1/n`.
pub fn equal(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Precondition("initial distribution is empty".into()));
    }
    if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::Precondition(format!("invalid atom {x}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PARAM_TOL {
        return Err(Error::Precondition(format!("initial distribution sums to {sum}")));
    }
    Ok(())
}

fn max_atom(p: &[f64]) -> f64 {
    p.iter().copied().fold(0.0, f64::max)
}

/// Pairwise survivor construction from `initial`; needs `max p_i <= b`.
pub fn survivor_program(initial: Vec<f64>, pair: ThresholdPair) -> Result<ConstructionProgram> {
    check_distribution(&initial)?;
    let m = max_atom(&initial);
    if m > pair.b() + PARAM_TOL {
        return Err(Error::Precondition(format!(
            "survivor needs every atom <= b = {}, largest is {m}",
            pair.b()
        )));
    }
    Ok(ConstructionProgram {
        pair,
        params: ProgramParams::Survivor { initial },
    })
}

/// Survivor preceded by the equal-split reductions from `m0` components.
pub fn survivor_zero_prefix_program(m0: usize, pair: ThresholdPair) -> Result<ConstructionProgram> {
    if m0 < 2 {
        return Err(Error::Precondition(format!("M0 must be at least 2, got {m0}")));
    }
    if 1.0 / m0 as f64 > pair.b() + PARAM_TOL {
        return Err(Error::Precondition(format!(
            "1/M0 = {} exceeds b = {}",
            1.0 / m0 as f64,
            pair.b()
        )));
    }
    Ok(ConstructionProgram {
        pair,
        params: ProgramParams::SurvivorZeroPrefix { m0 },
    })
}

/// Tied sequential construction on the geometric profile with ratio `b0`.
pub fn sequential_program(b0: f64, pair: ThresholdPair) -> Result<ConstructionProgram> {
    if !(b0 > 0.0 && b0 <= pair.b()) {
        return Err(Error::Precondition(format!(
            "sequential needs 0 < b0 <= b = {}, got {b0}",
            pair.b()
        )));
    }
    Ok(ConstructionProgram {
        pair,
        params: ProgramParams::Sequential {
            b0,
            initial: geometric_profile(b0),
        },
    })
}

/// Stage machine for many small atoms, followed by tied stages.
pub fn small_spread_program(initial: Vec<f64>, pair: ThresholdPair) -> Result<ConstructionProgram> {
    check_distribution(&initial)?;
    if let Some(x) = initial.iter().find(|&&x| x <= 0.0 || x >= pair.b()) {
        return Err(Error::Precondition(format!(
            "small-spread atoms must lie in (0, b = {}), got {x}",
            pair.b()
        )));
    }
    Ok(ConstructionProgram {
        pair,
        params: ProgramParams::SmallSpread { initial },
    })
}

/// Start from the depth-`depth` dyadic refinement of `p` and merge back.
/// `p` is sorted into decreasing order.
pub fn embed_prefix_program(p: Vec<f64>, depth: i64, pair: ThresholdPair) -> Result<ConstructionProgram> {
    if depth < 0 {
        return Err(Error::Precondition(format!(
            "refinement depth must be >= 0, got {depth}"
        )));
    }
    check_distribution(&p)?;
    let mut p = p;
    p.retain(|&x| x > 0.0);
    p.sort_by(|x, y| y.total_cmp(x));
    Ok(ConstructionProgram {
        pair,
        params: ProgramParams::EmbedPrefix {
            chain: refinement_chain(&p, depth as u32),
        },
    })
}

impl ConstructionProgram {
    pub fn kind(&self) -> ProgramKind {
        match self.params {
            ProgramParams::Survivor { .. } => ProgramKind::Survivor,
            ProgramParams::SurvivorZeroPrefix { .. } => ProgramKind::SurvivorZeroPrefix,
            ProgramParams::Sequential { .. } => ProgramKind::Sequential,
            ProgramParams::SmallSpread { .. } => ProgramKind::SmallSpread,
            ProgramParams::EmbedPrefix { .. } => ProgramKind::EmbedPrefix,
        }
    }

    /// Values of the configuration the first stage starts from.
    pub fn initial(&self) -> Vec<f64> {
        match &self.params {
            ProgramParams::Survivor { initial }
            | ProgramParams::Sequential { initial, .. }
            | ProgramParams::SmallSpread { initial } => initial.clone(),
            ProgramParams::SurvivorZeroPrefix { m0 } => equal(*m0),
            ProgramParams::EmbedPrefix { chain } => chain.last().map(|r| r.values()).unwrap_or_default(),
        }
    }
}

/// Milestones reported to a [`ProgramObserver`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProgramEvent {
    StageCompleted,
    /// `m` components at `1/m` (zero-prefix survivor).
    EqualSplit {
        m: usize,
    },
    /// A sequential driver is about to run from `value`.
    DriverExamined {
        id: ComponentId,
        value: f64,
    },
    /// The small-spread stage machine stopped.
    MachineTerminated {
        downcrossings: u32,
    },
    /// The configuration realizes refinement level `m` (embed prefix).
    RefinementLevel {
        m: u32,
    },
}

pub trait ProgramObserver {
    fn on_event(&mut self, event: &ProgramEvent, config: &Configuration);
}

impl<F: FnMut(&ProgramEvent, &Configuration)> ProgramObserver for F {
    fn on_event(&mut self, event: &ProgramEvent, config: &Configuration) {
        self(event, config)
    }
}

/// Optional hooks and limits for [`run_program_with`].
pub struct RunOptions<'h> {
    pub budget: u64,
    pub tracer: Option<&'h mut dyn MoveTracer>,
    pub observer: Option<&'h mut dyn ProgramObserver>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self {
            budget: DEFAULT_MOVE_BUDGET,
            tracer: None,
            observer: None,
        }
    }
}

/// Sample one realization of `program` until fixation.
pub fn run_program<R: Rng>(program: &ConstructionProgram, rng: R) -> Result<RunRecord> {
    run_program_with(program, rng, RunOptions::default())
}

pub fn run_program_with<R: Rng>(program: &ConstructionProgram, rng: R, opts: RunOptions<'_>) -> Result<RunRecord> {
    let pair = program.pair;
    let mut engine = Engine::new(pair, rng).with_budget(opts.budget);
    if let Some(t) = opts.tracer {
        engine = engine.with_tracer(t);
    }
    let mut run = Run {
        engine,
        observer: opts.observer,
    };
    let mut checkpoint = None;
    let config = match &program.params {
        ProgramParams::Survivor { initial } => {
            let mut c = Configuration::new(initial, &pair)?;
            survivor::run_survivor(&mut run, &mut c)?;
            c
        }
        ProgramParams::SurvivorZeroPrefix { m0 } => {
            let mut c = Configuration::new(&equal(*m0), &pair)?;
            survivor::run_survivor_zero_prefix(&mut run, &mut c, *m0)?;
            c
        }
        ProgramParams::Sequential { initial, .. } => {
            let mut c = Configuration::new(initial, &pair)?;
            sequential::run_sequential(&mut run, &mut c)?;
            c
        }
        ProgramParams::SmallSpread { initial } => {
            let mut c = Configuration::new(initial, &pair)?;
            checkpoint = Some(small_spread::run_small_spread(&mut run, &mut c)?);
            c
        }
        ProgramParams::EmbedPrefix { chain } => embed::run_embed(&mut run, chain)?,
    };
    config.check_invariants()?;
    let mut record = RunRecord::from_fixation(&config, run.engine.stages(), run.engine.moves())?;
    record.checkpoint_d_ab = checkpoint;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: f64, b: f64) -> ThresholdPair {
        ThresholdPair::new(a, b).unwrap()
    }

    #[test]
    fn preconditions() {
        assert!(survivor_program(vec![0.5, 0.5], pair(0.1, 0.3)).is_err());
        assert!(survivor_program(vec![0.3, 0.3], pair(0.1, 0.3)).is_err());
        assert!(survivor_program(equal(10), pair(0.05, 0.1)).is_ok());
        assert!(survivor_zero_prefix_program(8, pair(0.05, 0.1)).is_err());
        assert!(survivor_zero_prefix_program(1, pair(0.1, 0.5)).is_err());
        assert!(sequential_program(0.3, pair(0.1, 0.25)).is_err());
        assert!(sequential_program(0.0, pair(0.1, 0.25)).is_err());
        assert!(small_spread_program(vec![0.1, 0.9], pair(0.05, 0.1)).is_err());
        assert!(embed_prefix_program(vec![0.6, 0.4], -1, pair(0.1, 0.25)).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ProgramKind::ALL {
            assert_eq!(k.as_str().parse::<ProgramKind>().unwrap(), k);
        }
        assert_eq!("small-spread".parse::<ProgramKind>().unwrap(), ProgramKind::SmallSpread);
        assert!("wright".parse::<ProgramKind>().is_err());
    }
}
