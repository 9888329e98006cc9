//! Seeded run distribution. Run `i` always draws from stream `i` of the
//! master seed and results are folded into integer histograms, so the
//! aggregate is identical for any worker count and scheduling order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constructions::{run_program, ConstructionProgram};
use crate::engine::RunRecord;
use crate::error::{Error, Result};
use crate::rng::{run_stream, SimRng};
use crate::stats::Histogram;
use crate::wf::{wf_run, WfRunParams, WfState};

/// Runs handed to a worker at a time.
const BLOCK: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub runs: u64,
    pub seed: u64,
    /// 0 means one per available core.
    pub workers: usize,
}

/// Order-independent aggregate of many runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub runs: u64,
    /// Runs that hit a time or move limit; excluded from the histograms.
    pub truncated: u64,
    pub n_b: Histogram,
    pub d_ab: Histogram,
    /// Program checkpoint counts, when the program reports one.
    pub checkpoint_d_ab: Histogram,
    pub winners: BTreeMap<u32, u64>,
}

impl Tally {
    pub fn add(&mut self, record: Option<&RunRecord>) {
        self.runs += 1;
        let Some(r) = record else {
            self.truncated += 1;
            return;
        };
        *self.n_b.entry(r.n_b as u64).or_default() += 1;
        *self.d_ab.entry(r.d_ab as u64).or_default() += 1;
        if let Some(c) = r.checkpoint_d_ab {
            *self.checkpoint_d_ab.entry(c as u64).or_default() += 1;
        }
        *self.winners.entry(r.winner_id.0).or_default() += 1;
    }

    pub fn merge(mut self, other: Tally) -> Tally {
        self.runs += other.runs;
        self.truncated += other.truncated;
        for (dst, src) in [
            (&mut self.n_b, other.n_b),
            (&mut self.d_ab, other.d_ab),
            (&mut self.checkpoint_d_ab, other.checkpoint_d_ab),
        ] {
            for (v, c) in src {
                *dst.entry(v).or_default() += c;
            }
        }
        for (w, c) in other.winners {
            *self.winners.entry(w).or_default() += c;
        }
        self
    }

    /// Runs that completed.
    pub fn completed(&self) -> u64 {
        self.runs - self.truncated
    }
}

fn block(
    run: &(impl Fn(u64, SimRng) -> Result<Option<RunRecord>> + Sync),
    seed: u64,
    lo: u64,
    hi: u64,
) -> Result<Tally> {
    let mut t = Tally::default();
    for i in lo..hi {
        let rec = run(i, run_stream(seed, i))?;
        t.add(rec.as_ref());
    }
    Ok(t)
}

/// Execute `cfg.runs` runs of `run` (which receives the run index and its
/// stream and returns `None` for a truncated run). On failure the error of
/// the lowest failing block is returned.
pub fn run_many<F>(cfg: &McConfig, run: F) -> Result<Tally>
where
    F: Fn(u64, SimRng) -> Result<Option<RunRecord>> + Sync,
{
    let blocks: Vec<(u64, u64)> = (0..cfg.runs.div_ceil(BLOCK))
        .map(|b| (b * BLOCK, ((b + 1) * BLOCK).min(cfg.runs)))
        .collect();
    if cfg.workers == 1 {
        return blocks.iter().try_fold(Tally::default(), |acc, &(lo, hi)| {
            Ok(acc.merge(block(&run, cfg.seed, lo, hi)?))
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
    let parts: Vec<Result<Tally>> = pool.install(|| {
        blocks
            .par_iter()
            .map(|&(lo, hi)| block(&run, cfg.seed, lo, hi))
            .collect()
    });
    parts.into_iter().try_fold(Tally::default(), |acc, p| Ok(acc.merge(p?)))
}

/// `cfg.runs` realizations of a construction program.
pub fn simulate_program(program: &ConstructionProgram, cfg: &McConfig) -> Result<Tally> {
    run_many(cfg, |_, rng| run_program(program, rng).map(Some))
}

/// `cfg.runs` Wright-Fisher paths from `start`; the seed of `cfg` overrides
/// `params.seed`.
pub fn simulate_wf(params: &WfRunParams, start: &WfState, cfg: &McConfig) -> Result<Tally> {
    params.validate()?;
    run_many(cfg, |_, mut rng| Ok(wf_run(params, start, &mut rng)?.into_record()))
}
