//! Command-line front end: `solve` and `gen`.
//!
//! Instances are JSON documents (`weights`, `measures[{points, masses}]`) or
//! CSV tables with rows `measure_id, coord..., mass`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::driver::{self, PairVariant, SolveConfig, SolveResult, StartStrategy, StepTimings, TraceEntry};
use crate::error::{Error, Result};
use crate::model::{DiscreteMeasure, Instance, Strides};
use crate::oracle::{self, DIRECT_CAP};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "barycenter", version, about = "Exact discrete Wasserstein barycenters by column generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an instance file.
    Solve(SolveArgs),
    /// Print a random instance in general position.
    Gen(GenArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StartArg {
    Greedy,
    #[value(name = "2app")]
    TwoApp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PairArg {
    Any,
    Large,
    Small,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MassArg {
    Uniform,
    Random,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Instance file (.json, or .csv with rows measure_id,coords...,mass).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "greedy")]
    pub start: StartArg,
    #[arg(long, value_enum, default_value = "large")]
    pub pair: PairArg,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Solve the full LP directly instead.
    #[arg(long)]
    pub direct: bool,
    /// Result file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration objectives as CSV.
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    /// Comma-separated support sizes, one per measure.
    #[arg(long, value_delimiter = ',', conflicts_with = "size")]
    pub sizes: Option<Vec<usize>>,
    /// Support size shared by every measure.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub masses: MassArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    /// Product of the support sizes; informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_combinations: Option<u64>,
    pub weights: Vec<f64>,
    pub measures: Vec<MeasureFile>,
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        InstanceFile {
            num_combinations: inst.strides().ok().map(|s| s.total()),
            weights: inst.lambdas().to_vec(),
            measures: inst
                .measures()
                .iter()
                .map(|m| MeasureFile { points: m.points().map(<[f64]>::to_vec).collect(), masses: m.masses().to_vec() })
                .collect(),
        }
    }

    pub fn to_instance(&self) -> Result<Instance> {
        let measures = self
            .measures
            .iter()
            .enumerate()
            .map(|(i, m)| {
                DiscreteMeasure::new(m.points.clone(), m.masses.clone())
                    .map_err(|e| Error::InvalidInstance(format!("measure {i}: {}", strip_prefix(&e))))
            })
            .collect::<Result<Vec<_>>>()?;
        Instance::new(measures, self.weights.clone())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::InvalidInstance(msg) => msg.clone(),
        other => other.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultPoint {
    pub coords: Vec<f64>,
    pub mass: f64,
    pub assignment: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub barycenter: Vec<ResultPoint>,
    pub timings: StepTimings,
    pub trace: Vec<TraceEntry>,
}

impl From<&SolveResult> for ResultFile {
    fn from(r: &SolveResult) -> Self {
        ResultFile {
            objective: r.objective,
            iterations: r.iterations,
            converged: r.converged,
            barycenter: r
                .barycenter
                .iter()
                .map(|p| ResultPoint { coords: p.coords.clone(), mass: p.mass, assignment: p.assignment.clone() })
                .collect(),
            timings: r.timings.clone(),
            trace: r.trace.clone(),
        }
    }
}

/// Reads a JSON instance, or a CSV one when the extension is `.csv`.
pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        parse_csv_instance(&text)
    } else {
        parse_json_instance(&text)
    }
}

pub fn parse_json_instance(text: &str) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    file.to_instance()
}

/// Rows `measure_id, coord..., mass`; measure ids must be `0..n`. An optional
/// header row is skipped. All measures get weight `1/n`.
pub fn parse_csv_instance(text: &str) -> Result<Instance> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut measures: Vec<MeasureFile> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let line = record.position().map_or(k as u64 + 1, |p| p.line());
        if k == 0 && record.get(0).is_some_and(|f| f.parse::<usize>().is_err()) {
            continue;
        }
        if record.len() < 3 {
            return Err(Error::Parse(format!("line {line}: expected measure_id, coordinates, mass")));
        }
        let field = |j: usize| -> Result<f64> {
            record[j]
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {line} field {}: '{}' is not a number", j + 1, &record[j])))
        };
        let id: usize = record[0]
            .parse()
            .map_err(|_| Error::Parse(format!("line {line} field 1: '{}' is not a measure id", &record[0])))?;
        let coords = (1..record.len() - 1).map(field).collect::<Result<Vec<_>>>()?;
        let mass = field(record.len() - 1)?;
        if id >= measures.len() {
            measures.resize(id + 1, MeasureFile { points: Vec::new(), masses: Vec::new() });
        }
        measures[id].points.push(coords);
        measures[id].masses.push(mass);
    }
    if let Some(i) = measures.iter().position(|m| m.points.is_empty()) {
        return Err(Error::InvalidInstance(format!("measure {i}: no rows")));
    }
    let n = measures.len().max(1);
    InstanceFile { num_combinations: None, weights: vec![1.0 / n as f64; n], measures }.to_instance()
}

/// Seeded instance with points uniform on `[0, 1]^dim`.
pub fn generate(sizes: &[usize], dim: usize, masses: MassArg, seed: u64) -> Result<Instance> {
    if sizes.is_empty() || sizes.contains(&0) || dim == 0 {
        return Err(Error::InvalidInstance(format!("sizes {sizes:?} and dimension {dim} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let measures = sizes
        .iter()
        .map(|&k| {
            let points: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect();
            let masses = match masses {
                MassArg::Uniform => vec![1.0 / k as f64; k],
                MassArg::Random => {
                    let raw: Vec<f64> = (0..k).map(|_| 0.1 + rng.gen::<f64>()).collect();
                    let total: f64 = raw.iter().sum();
                    raw.iter().map(|r| r / total).collect()
                }
            };
            DiscreteMeasure::new(points, masses)
        })
        .collect::<Result<Vec<_>>>()?;
    Instance::uniform(measures)
}

pub fn write_trace_csv(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["iter", "rm_obj", "pricing_obj"]).map_err(csv_error)?;
    for t in trace {
        w.write_record([t.iter.to_string(), t.rm_obj.to_string(), t.pricing_obj.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn cmd_solve(args: &SolveArgs, stdout: &mut dyn Write) -> Result<i32> {
    let inst = load_instance(&args.input)?;
    let result = if args.direct {
        oracle::solve_direct(&inst).map_err(|e| match e {
            Error::Capacity { needed, limit, .. } => Error::Capacity {
                what: format!("direct solve with N = {needed} combinations (oracle cap {DIRECT_CAP})"),
                needed,
                limit,
            },
            other => other,
        })?
    } else {
        let cfg = SolveConfig {
            start: match args.start {
                StartArg::Greedy => StartStrategy::Greedy,
                StartArg::TwoApp => StartStrategy::TwoApprox,
            },
            pair_variant: match args.pair {
                PairArg::Any => PairVariant::Any,
                PairArg::Large => PairVariant::Large,
                PairArg::Small => PairVariant::Small,
            },
            tol: args.tol,
            max_iter: args.max_iter,
            ..Default::default()
        };
        driver::solve(&inst, &cfg)?
    };
    let json = serde_json::to_string_pretty(&ResultFile::from(&result)).map_err(|e| Error::Parse(e.to_string()))?;
    match &args.out {
        Some(path) => fs::write(path, json + "\n")?,
        None => writeln!(stdout, "{json}")?,
    }
    if let Some(path) = &args.trace_csv {
        write_trace_csv(path, &result.trace)?;
    }
    Ok(if result.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_gen(args: &GenArgs, stdout: &mut dyn Write) -> Result<i32> {
    let sizes = match (&args.sizes, args.size) {
        (Some(s), _) => s.clone(),
        (None, Some(k)) => vec![k; args.n],
        (None, None) => return Err(Error::Parse("one of --sizes or --size is required".into())),
    };
    if sizes.len() != args.n {
        return Err(Error::InvalidInstance(format!("--n is {} but {} sizes were given", args.n, sizes.len())));
    }
    Strides::new(&sizes)?;
    let inst = generate(&sizes, args.dim, args.masses, args.seed)?;
    let json =
        serde_json::to_string_pretty(&InstanceFile::from_instance(&inst)).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(stdout, "{json}")?;
    Ok(EXIT_OK)
}

/// Parses `argv` (program name first) and runs the command. Returns the exit status.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let status = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return status;
        }
    };
    let outcome = match &cli.command {
        Command::Solve(args) => cmd_solve(args, stdout),
        Command::Gen(args) => cmd_gen(args, stdout),
    };
    outcome.unwrap_or_else(|e| {
        let _ = writeln!(stderr, "error: {e}");
        EXIT_INPUT
    })
}
