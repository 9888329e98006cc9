use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use cml_core::analytic::bounds as bound_bundle;
use cml_core::constructions::{
    embed_prefix_program, equal, run_program_with, sequential_program, small_spread_program, survivor_program,
    survivor_zero_prefix_program, ConstructionProgram, ProgramParams, RunOptions,
};
use cml_core::engine::{ComponentId, MonitorStatus, MoveTracer};
use cml_core::market::{crossing_stats_from_series, ingest_market_csv, Interpolation};
use cml_core::montecarlo::{simulate_program, simulate_wf, McConfig, Tally};
use cml_core::pde::{corner_points, corner_report, pde_assemble, pde_solve_capped};
use cml_core::rng::run_stream;
use cml_core::stats::{gof_geometric, summarize_histogram, tally_report, BoundsReport};
use cml_core::wf::{cov3_mc, WfRunParams, WfState};
use cml_core::ThresholdPair;

use crate::{AnalyzeArgs, CliError, McArgs, PairArgs, PdeArgs, ProgramArg, ReportArgs, SimulateArgs, WfArgs, WfOpts};

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

/// JSON to `out`, or to stdout.
fn emit(out: Option<&PathBuf>, v: &Value) -> Result<()> {
    match out {
        Some(p) => write_file(p, &to_json(v)),
        None => {
            print!("{}", to_json(v));
            Ok(())
        }
    }
}

fn pair(a: f64, b: f64) -> Result<ThresholdPair> {
    Ok(ThresholdPair::new(a, b)?)
}

fn mc_config(mc: &McArgs) -> Result<McConfig> {
    if mc.runs == 0 {
        return Err(CliError::Usage("--runs must be positive".into()));
    }
    Ok(McConfig {
        runs: mc.runs,
        seed: mc.seed,
        workers: mc.workers,
    })
}

fn read_distribution(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Usage(format!("{}: file not found", path.display())),
        _ => io_err(path, e),
    })?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{}: invalid probability '{t}'", path.display())))
        })
        .collect()
}

fn build_program(args: &SimulateArgs, pair: ThresholdPair) -> Result<ConstructionProgram> {
    let given = match (&args.p, &args.p_file) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(f)) => Some(read_distribution(f)?),
        (None, None) => None,
    };
    let prog = match args.program {
        ProgramArg::Survivor => survivor_program(given.unwrap_or_else(|| equal(args.n0.unwrap_or(100))), pair)?,
        ProgramArg::Survivor0 => survivor_zero_prefix_program(args.m0, pair)?,
        ProgramArg::Sequential => sequential_program(args.b0, pair)?,
        ProgramArg::Smallspread => small_spread_program(given.unwrap_or_else(|| equal(args.n0.unwrap_or(40))), pair)?,
        ProgramArg::Embed => embed_prefix_program(given.unwrap_or_else(|| vec![0.6, 0.4]), args.depth, pair)?,
        ProgramArg::Wf => unreachable!("handled by the diffusion path"),
    };
    Ok(prog)
}

/// Writes one CSV row per elementary move of run 0.
struct CsvTracer {
    out: std::io::BufWriter<fs::File>,
    failed: Option<std::io::Error>,
}

impl MoveTracer for CsvTracer {
    fn record(&mut self, stage: u64, id: ComponentId, value: f64, status: MonitorStatus) {
        if self.failed.is_none() {
            if let Err(e) = writeln!(self.out, "0,{stage},{id},{value},{}", status.as_str()) {
                self.failed = Some(e);
            }
        }
    }
}

fn write_trace(program: &ConstructionProgram, seed: u64, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut t = CsvTracer {
        out: std::io::BufWriter::new(file),
        failed: None,
    };
    writeln!(t.out, "run_id,stage,component_id,value,status").map_err(|e| io_err(path, e))?;
    let opts = RunOptions {
        tracer: Some(&mut t),
        ..RunOptions::default()
    };
    run_program_with(program, run_stream(seed, 0), opts)?;
    if let Some(e) = t.failed.take() {
        return Err(io_err(path, e));
    }
    t.out.flush().map_err(|e| io_err(path, e))
}

fn write_hist(path: Option<&PathBuf>, report: &BoundsReport) -> Result<()> {
    match path {
        Some(p) => write_file(p, &report.histogram_csv()),
        None => Ok(()),
    }
}

fn report_or_err(pair: &ThresholdPair, tally: &Tally, z: f64) -> Result<BoundsReport> {
    if tally.completed() == 0 {
        return Err(CliError::Runtime(format!(
            "all {} runs were truncated; raise the time limit",
            tally.runs
        )));
    }
    Ok(tally_report(pair, tally, z)?)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let p = pair(args.pair.a, args.pair.b)?;
    if args.program == ProgramArg::Wf {
        if args.trace.is_some() {
            return Err(CliError::Usage(
                "--trace is available for construction programs only".into(),
            ));
        }
        return wf_distribution(p, &args.mc, &args.wf, "simulate");
    }
    let program = build_program(args, p)?;
    let cfg = mc_config(&args.mc)?;
    if let Some(path) = &args.trace {
        write_trace(&program, cfg.seed, path)?;
    }
    let tally = simulate_program(&program, &cfg)?;
    let report = report_or_err(&p, &tally, args.mc.z)?;

    let mut doc = json!({
        "command": "simulate",
        "program": program.kind().as_str(),
        "pair": p,
        "runs": tally.runs,
        "seed": cfg.seed,
        "parameters": program_parameters(&program),
        "truncated": tally.truncated,
        "report": report,
        "winners": tally.winners,
    });
    if matches!(program.params, ProgramParams::Sequential { .. }) {
        doc["goodness_of_fit"] = json!({
            "n_b_geometric": gof_geometric(&tally.n_b, p.b(), 0)?,
            "d_ab_plus_one_geometric": gof_geometric(&tally.d_ab, p.geometric_success(), 1)?,
        });
    }
    if !tally.checkpoint_d_ab.is_empty() {
        doc["machine_downcrossings"] = json!(summarize_histogram(&tally.checkpoint_d_ab, args.mc.z)?);
    }
    if args.mc.out.is_some() {
        print!("{}", report.to_text());
    }
    write_hist(args.mc.hist.as_ref(), &report)?;
    emit(args.mc.out.as_ref(), &doc)
}

/// Program parameters without bulky profiles and chains.
fn program_parameters(program: &ConstructionProgram) -> Value {
    match &program.params {
        ProgramParams::Sequential { b0, initial } => json!({
            "kind": "sequential",
            "b0": b0,
            "atoms": initial.len(),
        }),
        ProgramParams::EmbedPrefix { chain } => json!({
            "kind": "embed_prefix",
            "p": chain.first().map(|r| r.values()),
            "depth": chain.len().saturating_sub(1),
        }),
        other => json!(other),
    }
}

fn wf_params(p: ThresholdPair, seed: u64, wf: &WfOpts) -> Result<WfRunParams> {
    let params = WfRunParams {
        k: wf.k,
        h: wf.h,
        seed,
        monitors: p,
        bridge_correction: !wf.no_bridge,
        max_time: wf.max_time,
    };
    params.validate()?;
    Ok(params)
}

fn wf_distribution(p: ThresholdPair, mc: &McArgs, wf: &WfOpts, command: &str) -> Result<()> {
    let cfg = mc_config(mc)?;
    let params = wf_params(p, cfg.seed, wf)?;
    let tally = simulate_wf(&params, &WfState::equal(wf.k)?, &cfg)?;
    let report = report_or_err(&p, &tally, mc.z)?;
    let doc = json!({
        "command": command,
        "program": "wf",
        "pair": p,
        "runs": tally.runs,
        "seed": cfg.seed,
        "parameters": {
            "k": params.k,
            "h": params.h,
            "bridge_correction": params.bridge_correction,
            "max_time": params.max_time,
        },
        "truncated": tally.truncated,
        "report": report,
        "winners": tally.winners,
    });
    if mc.out.is_some() {
        print!("{}", report.to_text());
    }
    write_hist(mc.hist.as_ref(), &report)?;
    emit(mc.out.as_ref(), &doc)
}

pub fn wf(args: &WfArgs) -> Result<()> {
    let Some(xy) = &args.cov3 else {
        let a = args
            .a
            .ok_or_else(|| CliError::Usage("wf needs --a unless --cov3 is given".into()))?;
        return wf_distribution(pair(a, args.b)?, &args.mc, &args.wf, "wf");
    };
    if xy.len() != 2 {
        return Err(CliError::Usage("--cov3 takes two values X,Y".into()));
    }
    let p = pair(args.a.unwrap_or(args.b / 2.0), args.b)?;
    let cfg = mc_config(&args.mc)?;
    let params = wf_params(
        p,
        cfg.seed,
        &WfOpts {
            k: 3,
            ..args.wf.clone()
        },
    )?;
    let est = cov3_mc(xy[0], xy[1], args.b, &params, cfg.runs)?;
    let doc = json!({
        "command": "wf",
        "cov3": est,
        "seed": cfg.seed,
        "h": params.h,
        "bridge_correction": params.bridge_correction,
    });
    emit(args.mc.out.as_ref(), &doc)
}

pub fn pde(args: &PdeArgs) -> Result<()> {
    let system = pde_assemble(args.b, args.m)?;
    let grid = pde_solve_capped(&system, args.tol, args.max_iter)?;
    let (lo, hi) = grid
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let mut doc = json!({
        "command": "pde",
        "b": grid.b,
        "m": grid.m,
        "iterations": grid.iterations,
        "residual": grid.residual,
        "symmetry_defect": grid.symmetry_defect(),
        "boundary_defect": grid.boundary_defect(),
        "min_increment": grid.min_increment(),
        "min_value": lo,
        "max_value": hi,
    });
    if args.corner {
        if args.m.is_multiple_of(2) || args.m < 7 {
            return Err(CliError::Usage(
                "--corner needs an odd m >= 7 (nested coarse grid)".into(),
            ));
        }
        let coarse = pde_solve_capped(&pde_assemble(args.b, (args.m - 1) / 2)?, args.tol, args.max_iter)?;
        let points = corner_points(args.b);
        doc["nested_difference"] = json!(coarse.nested_difference(&grid)?);
        doc["corner"] = json!(corner_report(&coarse, &grid, &points)?);
    }
    if let Some(p) = &args.out {
        write_file(p, &grid.to_csv())?;
    }
    emit(args.report.as_ref(), &doc)
}

pub fn bounds(args: &PairArgs) -> Result<()> {
    let p = pair(args.a, args.b)?;
    emit(None, &json!(bound_bundle(&p)))
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let p = pair(args.pair.a, args.pair.b)?;
    let interp: Interpolation = args.interp.parse()?;
    let series = ingest_market_csv(&args.csv)?;
    let stats = crossing_stats_from_series(&series, &p, interp)?;
    let doc = json!({
        "command": "analyze",
        "source": args.csv.display().to_string(),
        "renormalized_timestamps": series.renormalized,
        "crossings": stats,
    });
    emit(args.out.as_ref(), &doc)
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let mut docs = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::Usage(format!("{}: file not found", path.display())),
            _ => io_err(path, e),
        })?;
        let content: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: invalid JSON: {e}", path.display())))?;
        docs.push(json!({ "source": path.display().to_string(), "content": content }));
    }
    emit(args.out.as_ref(), &json!({ "command": "report", "documents": docs }))
}
