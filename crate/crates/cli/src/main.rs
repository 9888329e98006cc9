//! `cml`: command-line front end of the contest martingale lab.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 runtime error.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad input files or parameters a construction rejects.
    Usage(String),
    /// A computation failed on valid input.
    Runtime(String),
}

impl From<cml_core::Error> for CliError {
    fn from(e: cml_core::Error) -> Self {
        if e.is_validation() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "cml", version, about = "Crossing statistics of contest martingales")]
pub struct Cli {
    /// key=value file of flag defaults; flags and CML_* variables take precedence
    #[arg(long, global = true, env = "CML_CONFIG", value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a construction program (or the Wright-Fisher diffusion) and report its crossing laws
    Simulate(SimulateArgs),
    /// Sample the Wright-Fisher diffusion from equal start, or estimate cov3
    Wf(WfArgs),
    /// Solve the joint hitting probability PDE and write the grid
    Pde(PdeArgs),
    /// Print the theoretical means and variance caps
    Bounds(PairArgs),
    /// Count threshold crossings in a market CSV
    Analyze(AnalyzeArgs),
    /// Merge JSON outputs into one document
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProgramArg {
    Survivor,
    #[value(alias = "survivor-zero-prefix", alias = "survivor_zero_prefix")]
    Survivor0,
    Sequential,
    #[value(alias = "small-spread", alias = "small_spread")]
    Smallspread,
    #[value(alias = "embed-prefix", alias = "embed_prefix")]
    Embed,
    Wf,
}

#[derive(Args, Debug, Clone, Copy)]
#[command(args_override_self = true)]
pub struct PairArgs {
    /// Lower threshold a
    #[arg(long, env = "CML_A")]
    pub a: f64,
    /// Upper threshold b
    #[arg(long, env = "CML_B")]
    pub b: f64,
}

#[derive(Args, Debug, Clone)]
pub struct McArgs {
    #[arg(long, env = "CML_RUNS", default_value_t = 10_000)]
    pub runs: u64,
    #[arg(long, env = "CML_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, env = "CML_WORKERS", default_value_t = 0)]
    pub workers: usize,
    /// Confidence multiplier of the reported intervals
    #[arg(long, env = "CML_Z", default_value_t = 3.0)]
    pub z: f64,
    /// JSON output path (stdout when absent)
    #[arg(long, env = "CML_OUT", value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Histogram CSV output path
    #[arg(long, env = "CML_HIST", value_name = "PATH")]
    pub hist: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct WfOpts {
    /// Number of equal starting components
    #[arg(long, env = "CML_K", default_value_t = 1000)]
    pub k: usize,
    /// Time step
    #[arg(long, env = "CML_H", default_value_t = 1e-5)]
    pub h: f64,
    /// Model time after which a run is truncated
    #[arg(long, env = "CML_MAX_TIME", default_value_t = 50.0)]
    pub max_time: f64,
    /// Disable the Brownian-bridge crossing correction
    #[arg(long, env = "CML_NO_BRIDGE")]
    pub no_bridge: bool,
}

#[derive(Args, Debug, Clone)]
#[command(args_override_self = true, allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[arg(long, env = "CML_PROGRAM", value_enum)]
    pub program: ProgramArg,
    #[command(flatten)]
    pub pair: PairArgs,
    /// First atom of the geometric profile (sequential)
    #[arg(long, env = "CML_B0", default_value_t = 0.05)]
    pub b0: f64,
    /// Number of equal atoms (survivor: 100, smallspread: 40)
    #[arg(long, env = "CML_N0")]
    pub n0: Option<usize>,
    /// Number of starting components of the zero prefix
    #[arg(long = "M0", alias = "m0", env = "CML_M0", default_value_t = 64)]
    pub m0: usize,
    /// Initial distribution, comma separated
    #[arg(long, env = "CML_P", value_delimiter = ',', conflicts_with = "p_file")]
    pub p: Option<Vec<f64>>,
    /// File holding the initial distribution (whitespace or comma separated)
    #[arg(long, env = "CML_P_FILE", value_name = "PATH")]
    pub p_file: Option<PathBuf>,
    /// Refinement depth of the embed program
    #[arg(long, env = "CML_DEPTH", default_value_t = 3)]
    pub depth: i64,
    /// CSV of every elementary move of run 0
    #[arg(long, env = "CML_TRACE", value_name = "PATH")]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub wf: WfOpts,
}

#[derive(Args, Debug, Clone)]
#[command(args_override_self = true)]
pub struct WfArgs {
    /// Lower threshold a (defaults to b/2 with --cov3)
    #[arg(long, env = "CML_A")]
    pub a: Option<f64>,
    #[arg(long, env = "CML_B")]
    pub b: f64,
    /// Estimate the probability that both of x and y reach b, from (x, y, 1-x-y)
    #[arg(long, env = "CML_COV3", value_delimiter = ',', value_name = "X,Y")]
    pub cov3: Option<Vec<f64>>,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub wf: WfOpts,
}

#[derive(Args, Debug, Clone)]
#[command(args_override_self = true)]
pub struct PdeArgs {
    #[arg(long, env = "CML_B", default_value_t = 0.5)]
    pub b: f64,
    /// Interior nodes per axis
    #[arg(long, env = "CML_M", default_value_t = 255)]
    pub m: usize,
    /// Relative residual tolerance
    #[arg(long, env = "CML_TOL", default_value_t = cml_core::pde::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, env = "CML_MAX_ITER", default_value_t = cml_core::pde::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Also solve on the nested coarse grid and report corner ratios and the grid change
    #[arg(long, env = "CML_CORNER")]
    pub corner: bool,
    /// Grid CSV output path (x,y,f)
    #[arg(long, env = "CML_OUT", value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Diagnostics JSON output path (stdout when absent)
    #[arg(long, env = "CML_REPORT", value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
#[command(args_override_self = true)]
pub struct AnalyzeArgs {
    #[arg(long, env = "CML_CSV", value_name = "PATH")]
    pub csv: PathBuf,
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long, env = "CML_INTERP", default_value = "linear")]
    pub interp: String,
    #[arg(long, env = "CML_OUT", value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
#[command(args_override_self = true)]
pub struct ReportArgs {
    #[arg(required = true, value_name = "JSON")]
    pub inputs: Vec<PathBuf>,
    #[arg(long, env = "CML_OUT", value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn run(argv: Vec<OsString>) -> Result<(), CliError> {
    let argv = config::expand(argv, &Cli::command())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return Err(CliError::Usage(String::new()));
        }
        Err(e) => {
            let _ = e.print();
            return Ok(());
        }
    };
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Wf(a) => commands::wf(&a),
        Command::Pde(a) => commands::pde(&a),
        Command::Bounds(a) => commands::bounds(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Report(a) => commands::report(&a),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            if !m.is_empty() {
                eprintln!("error: {m}");
            }
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
