use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use dynkin::generate::{generate_game, GenerateMode, GeneratorConfig};
use dynkin::io::report::{lattice_report, oracle_report, solve_report, to_pretty};
use dynkin::io::{parse_game, resolve_nodes, write_game, AnyGame, GameDoc, IoError, FORMAT_VERSION};
use dynkin::lattice::{LatticeError, LatticeSpec, StudyRow};
use dynkin::oracle::{OracleConfig, OracleError};
use dynkin::scalar::Arithmetic;
use dynkin::solver::check_assumption;
use dynkin::tree::{TreeError, DEFAULT_ENUMERATION_CAP};
use dynkin::{compute_value, Scalar};

/// Solver, verifier and experiment harness for zero-sum Dynkin games on
/// finite filtration trees.
#[derive(Parser)]
#[command(name = "dynkin", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Value process, first-hitting strategies and assumption check.
    Solve(SolveArgs),
    /// Brute-force minimax, equilibrium certificates and the existence check.
    Oracle(OracleArgs),
    /// Solve plus oracle certificates in one report.
    Report(OracleArgs),
    /// Epsilon-strategy experiments on a time lattice.
    Lattice(LatticeArgs),
    /// Seeded random game files.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Arithmetic to solve in; converts the file if it declares the other mode.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Arithmetic>,
    /// Float-mode comparison tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Write here (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct SolveArgs {
    file: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct OracleArgs {
    file: PathBuf,
    /// Start node id; repeatable. Defaults to the file's `start`, else the root.
    #[arg(long)]
    start: Vec<String>,
    /// Largest stopping-time set one enumeration may visit.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: u128,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct LatticeArgs {
    spec: PathBuf,
    /// Epsilon values; repeatable or comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.1, 0.01])]
    epsilon: Vec<f64>,
    /// Step counts; repeatable or comma separated. Defaults to the spec's.
    #[arg(long, value_delimiter = ',')]
    steps: Vec<usize>,
    /// Without --steps, run the ladder N/4, N/2, N of the spec's step count.
    #[arg(long)]
    study: bool,
    /// Overrides the spec's tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 2)]
    branch: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, value_parser = parse_gen_mode, default_value = "general")]
    mode: GenerateMode,
    /// Redraw trees with more root stopping times than this.
    #[arg(long, default_value_t = 4096)]
    max_stopping_times: u128,
    /// Output directory; required when --count > 1.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Arithmetic, String> {
    s.parse()
}

fn parse_gen_mode(s: &str) -> Result<GenerateMode, String> {
    s.parse()
}

/// Failure classes with their exit codes.
#[derive(Debug)]
enum Failure {
    /// Bad input: parse, validation or arguments.
    Input(anyhow::Error),
    /// Enumeration cap or node budget exceeded.
    Limit(anyhow::Error),
    /// An internal cross-check failed.
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Limit(_) => 2,
            Failure::Internal(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Limit(e) | Failure::Internal(e) => e,
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Input(e.into())
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Tree(TreeError::CapExceeded { .. }) | OracleError::Undecided(_) => Failure::Limit(e.into()),
            other => Failure::Input(other.into()),
        }
    }
}

impl From<LatticeError> for Failure {
    fn from(e: LatticeError) -> Self {
        match e {
            LatticeError::Budget { .. } => Failure::Limit(e.into()),
            other => Failure::Input(other.into()),
        }
    }
}

/// Exit status of a successful run.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Ok,
    AssumptionViolated,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(&a),
        Command::Oracle(a) => oracle(&a, false),
        Command::Report(a) => oracle(&a, true),
        Command::Lattice(a) => lattice(&a),
        Command::Generate(a) => generate(&a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::AssumptionViolated) => ExitCode::from(3),
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Input)
}

fn load(path: &Path, common: &Common) -> Result<AnyGame, Failure> {
    let text = read(path)?;
    let game = parse_game(&text).with_context(|| path.display().to_string()).map_err(Failure::Input)?;
    let mode = common.mode.unwrap_or(game.mode());
    Ok(game.convert(mode, common.tolerance)?)
}

/// Writes to `out` via a temporary file in the same directory, or to stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Input(anyhow!(e));
    match out {
        None => std::io::stdout().write_all(text.as_bytes()).map_err(io),
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(text.as_bytes()).map_err(io)?;
            tmp.persist(path).map_err(|e| io(e.error))?;
            Ok(())
        }
    }
}

fn node_csv(report: &Value) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let cols = ["id", "time", "x", "y", "z", "lower", "upper", "value", "continuation"];
    w.write_record(cols).map_err(|e| Failure::Internal(e.into()))?;
    for node in report["nodes"].as_array().into_iter().flatten() {
        let cells: Vec<String> = cols
            .iter()
            .map(|c| match &node[*c] {
                Value::String(s) => s.clone(),
                Value::Null => String::new(),
                v => v.to_string(),
            })
            .collect();
        w.write_record(&cells).map_err(|e| Failure::Internal(e.into()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Internal(anyhow!(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn solve(args: &SolveArgs) -> Result<Outcome, Failure> {
    match load(&args.file, &args.common)? {
        AnyGame::Rational(d) => solve_doc(&d, &args.common),
        AnyGame::Float(d) => solve_doc(&d, &args.common),
    }
}

fn solve_doc<S: Scalar>(doc: &GameDoc<S>, common: &Common) -> Result<Outcome, Failure> {
    let value = compute_value(&doc.game);
    let report = solve_report(doc, &value);
    let text = match common.format {
        Format::Json => to_pretty(&report),
        Format::Csv => node_csv(&report)?,
    };
    emit(common.out.as_deref(), &text)?;
    Ok(assumption_outcome(doc, &value))
}

fn assumption_outcome<S: Scalar>(doc: &GameDoc<S>, value: &dynkin::ValueProcess<S>) -> Outcome {
    if check_assumption(&doc.game, value).holds_everywhere {
        Outcome::Ok
    } else {
        Outcome::AssumptionViolated
    }
}

fn oracle(args: &OracleArgs, full: bool) -> Result<Outcome, Failure> {
    match load(&args.file, &args.common)? {
        AnyGame::Rational(d) => oracle_doc(&d, args, full),
        AnyGame::Float(d) => oracle_doc(&d, args, full),
    }
}

fn oracle_doc<S: Scalar>(doc: &GameDoc<S>, args: &OracleArgs, full: bool) -> Result<Outcome, Failure> {
    if args.common.format == Format::Csv {
        return Err(Failure::Input(anyhow!("csv output is only available for solve and lattice")));
    }
    let starts = if args.start.is_empty() {
        doc.start_nodes(|t| vec![t.root()])?
    } else {
        resolve_nodes(doc.game.tree(), &args.start)?
    };
    let cfg = OracleConfig { cap: args.cap, ..OracleConfig::default() };
    let value = compute_value(&doc.game);
    let oracle = oracle_report(doc, &value, &starts, &cfg)?;
    for s in oracle["starts"].as_array().into_iter().flatten() {
        if s["minimax"]["sandwich_holds"] != Value::Bool(true) {
            return Err(Failure::Internal(anyhow!("minimax ≥ V ≥ maximin fails at node {}", s["start"])));
        }
    }
    if oracle["existence"]["agree"] != Value::Bool(true) {
        return Err(Failure::Internal(anyhow!(
            "assumption and equilibrium existence disagree at node {}",
            oracle["existence"]["offending"]
        )));
    }
    let report = if full {
        let mut r = solve_report(doc, &value);
        r["command"] = Value::from("report");
        r["oracle"] = Value::Array(oracle["starts"].as_array().cloned().unwrap_or_default());
        r["existence"] = oracle["existence"].clone();
        r["cap"] = oracle["cap"].clone();
        r
    } else {
        oracle
    };
    emit(args.common.out.as_deref(), &to_pretty(&report))?;
    Ok(if full { assumption_outcome(doc, &value) } else { Outcome::Ok })
}

fn parse_lattice_spec(text: &str) -> Result<LatticeSpec, Failure> {
    let mut v: Value = serde_json::from_str(text).map_err(|e| Failure::Input(IoError::from(e).into()))?;
    let version = v.get("format_version").and_then(Value::as_u64);
    if version != Some(FORMAT_VERSION as u64) {
        return Err(Failure::Input(anyhow!("lattice spec needs \"format_version\": {FORMAT_VERSION}")));
    }
    v.as_object_mut().expect("object with a version").remove("format_version");
    serde_json::from_value(v).map_err(|e| Failure::Input(anyhow!("lattice spec: {e}")))
}

#[derive(Serialize)]
struct CsvRow {
    #[serde(rename = "N")]
    steps: usize,
    epsilon: f64,
    value_root: f64,
    gap_max: f64,
    gap_min: f64,
    #[serde(rename = "E_tau")]
    e_tau: f64,
    #[serde(rename = "E_sigma")]
    e_sigma: f64,
    runtime_ms: u64,
}

impl From<&StudyRow> for CsvRow {
    fn from(r: &StudyRow) -> Self {
        CsvRow {
            steps: r.steps,
            epsilon: r.epsilon,
            value_root: r.value_root,
            gap_max: r.gap_max,
            gap_min: r.gap_min,
            e_tau: r.e_tau,
            e_sigma: r.e_sigma,
            runtime_ms: r.runtime_ms,
        }
    }
}

fn lattice(args: &LatticeArgs) -> Result<Outcome, Failure> {
    if let Some(e) = args.epsilon.iter().find(|e| !(**e > 0.0)) {
        return Err(Failure::Input(anyhow!(
            "epsilon must be positive, got {e} (the zero-epsilon pair is the solver's first-hitting pair)"
        )));
    }
    let mut spec = parse_lattice_spec(&read(&args.spec)?)?;
    if args.tolerance.is_some() {
        spec.tolerance = args.tolerance;
    }
    let steps = if !args.steps.is_empty() {
        args.steps.clone()
    } else if args.study {
        let n = spec.steps;
        let mut ladder = vec![(n / 4).max(1), (n / 2).max(1), n];
        ladder.dedup();
        ladder
    } else {
        vec![spec.steps]
    };
    let (report, rows) = lattice_report(&spec, &args.epsilon, &steps, None)?;
    let text = match args.format {
        Format::Json => to_pretty(&report),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(CsvRow::from(r)).map_err(|e| Failure::Internal(e.into()))?;
            }
            let bytes = w.into_inner().map_err(|e| Failure::Internal(anyhow!(e.to_string())))?;
            String::from_utf8(bytes).expect("csv is utf-8")
        }
    };
    emit(args.out.as_deref(), &text)?;
    Ok(Outcome::Ok)
}

fn generate(args: &GenerateArgs) -> Result<Outcome, Failure> {
    if args.depth == 0 || args.branch == 0 {
        return Err(Failure::Input(anyhow!("depth and branch must be at least 1")));
    }
    let cfg = GeneratorConfig {
        depth: args.depth,
        branch: args.branch,
        mode: args.mode,
        max_stopping_times: args.max_stopping_times,
        ..GeneratorConfig::default()
    };
    // the smallest tree of this depth is a chain with depth + 1 stopping times
    if (args.depth as u128) + 1 > cfg.max_stopping_times {
        return Err(Failure::Limit(anyhow!(
            "no tree of depth {} fits within {} stopping times",
            args.depth,
            cfg.max_stopping_times
        )));
    }
    if args.count > 1 && args.out.is_none() {
        return Err(Failure::Input(anyhow!("--out DIR is required when --count > 1")));
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| Failure::Input(anyhow!(e)))?;
    }
    for i in 0..args.count {
        let doc = GameDoc { game: generate_game(&cfg, args.seed, i as u64), start: None, seed: Some(args.seed) };
        let text = write_game(&doc)?;
        match &args.out {
            Some(dir) => emit(Some(&dir.join(format!("game-{}-{:04}.json", args.seed, i))), &text)?,
            None => emit(None, &text)?,
        }
    }
    Ok(Outcome::Ok)
}
