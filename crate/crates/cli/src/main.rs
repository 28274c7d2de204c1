//! `polytraverse`: traversal, verification and plot-data export for ReLU
//! networks.
//!
//! Exit codes: 0 verified or completed, 1 violated, 2 input or parse error,
//! 3 solver error, 4 truncated.

mod commands;
mod report;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use polytraverse::lp::{DEFAULT_INTERIOR_TOL, DEFAULT_NUMERIC_TOL, DEFAULT_SENTINEL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_TRUNCATED: i32 = 4;

#[derive(Parser)]
#[command(
    name = "polytraverse",
    version,
    about = "Polytope traversal and verification for ReLU networks"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Threads used for neighbor checks.
    #[arg(long, global = true, env = "POLYTRAVERSE_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// Interior margin for strict inequalities.
    #[arg(long, global = true, default_value_t = DEFAULT_INTERIOR_TOL)]
    pub interior_tol: f64,
    /// Numerical tolerance.
    #[arg(long, global = true, default_value_t = DEFAULT_NUMERIC_TOL)]
    pub numeric_tol: f64,
    /// Half-width of the box that bounds otherwise unbounded regions.
    #[arg(long, global = true, default_value_t = DEFAULT_SENTINEL)]
    pub sentinel: f64,
    /// Stop after visiting this many polytopes.
    #[arg(long, global = true)]
    pub max_polytopes: Option<usize>,
    /// Stop after this many seconds.
    #[arg(long, global = true)]
    pub time_budget: Option<f64>,
    /// Check every hyperplane for neighbors instead of only those cutting the region.
    #[arg(long, global = true)]
    pub no_prescreen: bool,
}

#[derive(Args, Debug, Clone)]
pub struct NetArgs {
    /// Network file (.json or .nnet).
    #[arg(long)]
    pub net: PathBuf,
    /// Network format when the extension is not telling.
    #[arg(long)]
    pub net_format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Visit every polytope meeting a region.
    Traverse(TraverseArgs),
    /// Run one verification over a region.
    Verify(VerifyArgs),
    /// Export cell polygons and hyperplane segments of a two-input network.
    DumpPolytopes(DumpArgs),
    /// Convert between the JSON and NNet network formats.
    Convert(ConvertArgs),
}

#[derive(Args, Debug)]
pub struct TraverseArgs {
    #[command(flatten)]
    pub net: NetArgs,
    /// Region as a JSON file or inline JSON.
    #[arg(long)]
    pub region: String,
    /// Comma-separated start point; the region center by default.
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<String>,
    /// Include each polytope's local linear model.
    #[arg(long)]
    pub models: bool,
    /// Report path; standard output by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct Mode {
    /// Linear output property file.
    #[arg(long, value_name = "FILE")]
    pub property: Option<PathBuf>,
    /// L∞ robustness of the prediction at X0 within radius EPS.
    #[arg(long, num_args = 2, value_names = ["X0", "EPS"], allow_hyphen_values = true)]
    pub robust: Option<Vec<String>>,
    /// Monotonicity of the scalar output in feature J (0-based); DIR is increasing, decreasing or any.
    #[arg(long, num_args = 2, value_names = ["J", "DIR"])]
    pub monotone: Option<Vec<String>>,
    /// Range of one output over the region.
    #[arg(long)]
    pub range: bool,
    /// Nearest point to X0 with a different predicted class; NORM is l1, l2 or linf.
    #[arg(long, num_args = 2, value_names = ["X0", "NORM"], allow_hyphen_values = true)]
    pub counterfactual: Option<Vec<String>>,
    /// Most adversarial point for label or class LABEL of X0 within the region.
    #[arg(long, num_args = 2, value_names = ["X0", "LABEL"], allow_hyphen_values = true)]
    pub attack: Option<Vec<String>>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub mode: Mode,
    /// Region as a JSON file or inline JSON.
    #[arg(long)]
    pub region: Option<String>,
    /// Class threshold for scalar outputs.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub threshold: f64,
    /// Output index for --range.
    #[arg(long, default_value_t = 0)]
    pub output: usize,
    /// Comma-separated lower feature bounds for --robust.
    #[arg(long, allow_hyphen_values = true)]
    pub clip_lower: Option<String>,
    /// Comma-separated upper feature bounds for --robust.
    #[arg(long, allow_hyphen_values = true)]
    pub clip_upper: Option<String>,
    /// Also maximize the exact softmax objective in --attack (inputs ≤ 4).
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long)]
    pub region: String,
    /// Output path; `.csv` selects CSV, anything else JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write CSV to standard output.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Input format; taken from the extension by default.
    #[arg(long)]
    pub from: Option<String>,
    /// Output format; taken from the extension by default.
    #[arg(long)]
    pub to: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let result = match &cli.command {
        Command::Traverse(a) => commands::traverse(&cli.global, a, argv),
        Command::Verify(a) => commands::verify(&cli.global, a, argv),
        Command::DumpPolytopes(a) => commands::dump(&cli.global, a),
        Command::Convert(a) => commands::convert(a),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
