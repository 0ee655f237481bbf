//! `hybridlearn`: learn, inspect and run hybrid automata from CSV traces.
//!
//! Exit codes: 0 on success, 1 on validation or usage errors, 2 on I/O
//! errors. Diagnostics go to standard error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hybridlearn_core::datagen::{gen_polyplant, gen_thermostat, PlantSpec};
use hybridlearn_core::dtw::similarity;
use hybridlearn_core::segmentation::{detect_change_points, segment};
use hybridlearn_core::traces::{load_inputs, load_trace, load_trace_auto, to_frequency, write_trace};
use hybridlearn_core::{
    finalize, CostModel, Error, HybridAutomaton, IOTrace, LearnerConfig, ModelStore, NormalizationParams,
};

#[derive(Parser)]
#[command(
    name = "hybridlearn",
    version,
    about = "Passive online learning of hybrid automata from input/output traces"
)]
struct Cli {
    /// Report per-trace progress on standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect change points in one trace.
    Segment(SegmentArgs),
    /// Learn a model from a directory of traces, optionally refining an existing one.
    Learn(LearnArgs),
    /// Print the mean normalized RMSE of a model over a directory of traces.
    Eval(EvalArgs),
    /// Run a model on an input trace and write the predicted outputs.
    Simulate(SimulateArgs),
    /// Export a model as DOT or JSON.
    Export(ExportArgs),
    /// Generate synthetic traces.
    Gen(GenArgs),
    /// Convert binary square-wave channels to rising-edge frequencies.
    Freq(FreqArgs),
    /// Print DTW distance and diagonality between two CSV segments.
    Dtw(DtwArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Comma-separated output channels, for headers without `i:`/`o:` prefixes.
    #[arg(long, value_delimiter = ',')]
    outputs: Vec<String>,
}

#[derive(Args)]
struct DetectorArgs {
    /// Change-point window W, in samples.
    #[arg(long, default_value_t = LearnerConfig::default().window)]
    window: usize,
    /// Minimum spacing between change points, in samples.
    #[arg(long, default_value_t = LearnerConfig::default().min_size)]
    min_size: usize,
    /// Discrepancy penalty; automatic when omitted.
    #[arg(long)]
    penalty: Option<f64>,
    /// Window cost: l2 for level shifts, linear for slope changes.
    #[arg(long, default_value = "l2")]
    cost: CostModel,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Write the change points here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write each segment as seg_000.csv, seg_001.csv, ... into this directory.
    #[arg(long)]
    segments_dir: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    /// Directory of CSV traces, processed in lexicographic filename order.
    #[arg(long)]
    traces: PathBuf,
    /// Model to refine; its stored configuration is reused.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Largest DTW distance at which a segment joins a state.
    #[arg(long, default_value_t = LearnerConfig::default().dist_threshold)]
    dist_threshold: f64,
    /// Smallest alignment diagonality at which a segment joins a state.
    #[arg(long, default_value_t = LearnerConfig::default().diag_threshold)]
    diag_threshold: f64,
    /// Half-width v of change-point neighborhoods, in samples.
    #[arg(long, default_value_t = LearnerConfig::default().vicinity)]
    vicinity: usize,
    /// Segments kept per state and neighborhoods per transition.
    #[arg(long, default_value_t = LearnerConfig::default().max_segments)]
    max_segments: usize,
    /// Degree of the polynomial flows.
    #[arg(long, default_value_t = LearnerConfig::default().degree)]
    degree: u32,
    /// Sharpness of input confidence levels.
    #[arg(long, default_value_t = LearnerConfig::default().beta)]
    beta: f64,
    /// Dwell-time variance below which a time condition is mined (normalized time squared).
    #[arg(long, default_value_t = LearnerConfig::default().time_var_threshold)]
    time_var_threshold: f64,
    /// Ridge weight of the flow regression.
    #[arg(long, default_value_t = LearnerConfig::default().ridge)]
    ridge: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory of CSV test traces.
    #[arg(long)]
    traces: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with the time and input columns; output columns are optional.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Dot,
    Json,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "dot")]
    format: ExportFormat,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Plant {
    Thermostat,
    Polyplant,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    plant: Plant,
    /// Number of traces [default: 10, or the spec's count for polyplant].
    #[arg(long)]
    n: Option<usize>,
    /// Random seed [default: 0, or the spec's seed for polyplant].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; created when missing.
    #[arg(long)]
    out: PathBuf,
    /// JSON plant description for polyplant; the built-in three-mode plant otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct FreqArgs {
    #[arg(long)]
    input: PathBuf,
    /// Window length in sampling intervals.
    #[arg(long)]
    window: usize,
    /// Channels to convert; every binary channel when omitted.
    #[arg(long, value_delimiter = ',')]
    channels: Vec<String>,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DtwArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_io() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand is required");
    match run(cli, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli, matches: &ArgMatches) -> Outcome {
    let verbose = cli.verbose;
    match cli.command {
        Command::Segment(a) => cmd_segment(a),
        Command::Learn(a) => cmd_learn(a, matches, verbose),
        Command::Eval(a) => cmd_eval(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Export(a) => cmd_export(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Freq(a) => cmd_freq(a),
        Command::Dtw(a) => cmd_dtw(a),
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Outcome {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_failure(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_failure(path, e))?;
    tmp.persist(path).map_err(|e| io_failure(path, e.error))?;
    Ok(())
}

fn trace_csv(trace: &IOTrace) -> Outcome<Vec<u8>> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf)?;
    Ok(buf)
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// CSV files directly inside `dir`, sorted by file name.
fn list_traces(dir: &Path) -> Outcome<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| io_failure(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_failure(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")) {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if paths.is_empty() {
        return Err(invalid(format!("no .csv traces in {}", dir.display())));
    }
    Ok(paths)
}

fn read_model(path: &Path) -> Outcome<HybridAutomaton> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    Ok(HybridAutomaton::from_json(&text)?)
}

fn with_path<T>(path: &Path, r: hybridlearn_core::Result<T>) -> Outcome<T> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn cmd_segment(a: SegmentArgs) -> Outcome {
    let cfg = LearnerConfig {
        window: a.detector.window,
        min_size: a.detector.min_size,
        penalty: a.detector.penalty,
        cost: a.detector.cost,
        ..LearnerConfig::default()
    };
    cfg.validate()?;
    let raw = with_path(&a.input, load_trace_auto(&a.input, &a.schema.outputs))?;
    let trace = NormalizationParams::fit(&raw).apply(&raw)?;
    let cps = detect_change_points(&trace, &cfg.detector())?;

    #[derive(Serialize)]
    struct Point {
        index: usize,
        time: f64,
        discrepancy: f64,
    }
    let points: Vec<Point> = cps
        .indices
        .iter()
        .zip(&cps.discrepancy)
        .map(|(&index, &discrepancy)| Point {
            index,
            time: raw.times[index],
            discrepancy,
        })
        .collect();
    let mut json = serde_json::to_string_pretty(&points).map_err(|e| invalid(e.to_string()))?;
    json.push('\n');

    if let Some(dir) = &a.segments_dir {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        for (k, seg) in segment(&raw, &cps).iter().enumerate() {
            let (lo, hi) = (seg.start, seg.end);
            let part = IOTrace::new(
                raw.schema.clone(),
                raw.times[lo..=hi].to_vec(),
                raw.channels.iter().map(|c| c[lo..=hi].to_vec()).collect(),
            )?;
            write_atomic(&dir.join(format!("seg_{k:03}.csv")), &trace_csv(&part)?)?;
        }
    }
    emit(a.out.as_deref(), &json)
}

fn learner_config(a: &LearnArgs) -> LearnerConfig {
    LearnerConfig {
        dist_threshold: a.dist_threshold,
        diag_threshold: a.diag_threshold,
        window: a.detector.window,
        min_size: a.detector.min_size,
        vicinity: a.vicinity,
        max_segments: a.max_segments,
        degree: a.degree,
        beta: a.beta,
        time_var_threshold: a.time_var_threshold,
        ridge: a.ridge,
        penalty: a.detector.penalty,
        cost: a.detector.cost,
    }
}

/// Learner flags given explicitly whose value differs from `stored`.
fn conflicting_flags(matches: &ArgMatches, given: &LearnerConfig, stored: &LearnerConfig) -> Vec<&'static str> {
    let checks: [(&str, bool); 12] = [
        ("dist_threshold", given.dist_threshold != stored.dist_threshold),
        ("diag_threshold", given.diag_threshold != stored.diag_threshold),
        ("window", given.window != stored.window),
        ("min_size", given.min_size != stored.min_size),
        ("vicinity", given.vicinity != stored.vicinity),
        ("max_segments", given.max_segments != stored.max_segments),
        ("degree", given.degree != stored.degree),
        ("beta", given.beta != stored.beta),
        (
            "time_var_threshold",
            given.time_var_threshold != stored.time_var_threshold,
        ),
        ("ridge", given.ridge != stored.ridge),
        ("penalty", given.penalty != stored.penalty),
        ("cost", given.cost != stored.cost),
    ];
    checks
        .into_iter()
        .filter(|&(id, differs)| differs && matches.value_source(id) == Some(ValueSource::CommandLine))
        .map(|(id, _)| id)
        .collect()
}

fn cmd_learn(a: LearnArgs, matches: &ArgMatches, verbose: bool) -> Outcome {
    let given = learner_config(&a);
    given.validate()?;
    let mut store = match &a.resume {
        None => ModelStore::new(given)?,
        Some(path) => {
            let model = read_model(path)?;
            let store = model
                .learner
                .ok_or_else(|| invalid(format!("{} holds no learner state to resume from", path.display())))?;
            let conflicts = conflicting_flags(matches, &given, &store.config);
            if !conflicts.is_empty() {
                let flags: Vec<String> = conflicts.iter().map(|c| format!("--{}", c.replace('_', "-"))).collect();
                return Err(invalid(format!(
                    "{} do not match the configuration stored in {}",
                    flags.join(", "),
                    path.display()
                )));
            }
            store
        }
    };
    for path in list_traces(&a.traces)? {
        let trace = match &store.schema {
            Some(s) => load_trace(&path, s),
            None => load_trace_auto(&path, &a.schema.outputs),
        };
        let trace = with_path(&path, trace)?;
        let report = with_path(&path, store.learn_trace(&trace))?;
        if verbose {
            eprintln!(
                "{}: {} change points, states {:?}, new {:?}",
                path.display(),
                report.change_points.len(),
                report.assignments,
                report.created
            );
        }
    }
    let (mut model, warnings) = finalize(&store)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    for m in model.modes.iter().filter(|m| m.fit_error.is_some()) {
        eprintln!(
            "warning: mode {} uses a constant flow ({})",
            m.id,
            m.fit_error.as_deref().unwrap_or_default()
        );
    }
    if verbose {
        eprintln!("{} modes, {} switches", model.modes.len(), model.switches.len());
    }
    model.learner = Some(store);
    write_atomic(&a.out, model.to_json()?.as_bytes())
}

fn load_test_set(model: &HybridAutomaton, dir: &Path) -> Outcome<Vec<IOTrace>> {
    list_traces(dir)?
        .iter()
        .map(|p| with_path(p, load_trace(p, &model.schema)))
        .collect()
}

fn cmd_eval(a: EvalArgs) -> Outcome {
    let model = read_model(&a.model)?;
    let tests = load_test_set(&model, &a.traces)?;
    println!("{:.6}", model.cost(&tests)?);
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Outcome {
    let model = read_model(&a.model)?;
    let input = with_path(&a.input, load_inputs(&a.input, &model.schema))?;
    let predicted = model.simulate_trace(&input)?;
    write_atomic(&a.out, &trace_csv(&predicted)?)
}

fn cmd_export(a: ExportArgs) -> Outcome {
    let mut model = read_model(&a.model)?;
    let text = match a.format {
        ExportFormat::Dot => model.to_dot(),
        ExportFormat::Json => {
            model.learner = None;
            model.to_json()?
        }
    };
    emit(a.out.as_deref(), &text)
}

fn cmd_gen(a: GenArgs) -> Outcome {
    let traces = match a.plant {
        Plant::Thermostat => {
            if a.spec.is_some() {
                return Err(invalid("--spec applies to polyplant only"));
            }
            gen_thermostat(a.n.unwrap_or(10), a.seed.unwrap_or(0))
        }
        Plant::Polyplant => {
            let mut spec = match &a.spec {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
                    serde_json::from_str::<PlantSpec>(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?
                }
                None => PlantSpec::three_mode(),
            };
            if let Some(n) = a.n {
                spec.traces = n;
            }
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            spec.validate()?;
            gen_polyplant(&spec)?.into_iter().map(|r| r.trace).collect()
        }
    };
    fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;
    for (k, t) in traces.iter().enumerate() {
        write_atomic(&a.out.join(format!("trace_{k:03}.csv")), &trace_csv(t)?)?;
    }
    Ok(())
}

fn cmd_freq(a: FreqArgs) -> Outcome {
    if a.window < 2 {
        return Err(invalid("--window must be at least 2"));
    }
    let trace = with_path(&a.input, load_trace_auto(&a.input, &a.schema.outputs))?;
    let out = to_frequency(&trace, a.window, &a.channels)?;
    write_atomic(&a.out, &trace_csv(&out)?)
}

fn cmd_dtw(a: DtwArgs) -> Outcome {
    let x = with_path(&a.a, load_trace_auto(&a.a, &a.schema.outputs))?;
    let y = with_path(&a.b, load_trace_auto(&a.b, &a.schema.outputs))?;
    let names = |t: &IOTrace| t.schema.channels.iter().map(|c| c.name.clone()).collect::<Vec<_>>();
    if names(&x) != names(&y) {
        return Err(invalid("segments have different channels"));
    }
    let all: Vec<usize> = (0..x.channels.len()).collect();
    let sim = similarity(&x.rows(0, x.len() - 1, &all), &y.rows(0, y.len() - 1, &all))?;
    println!("{}", serde_json::to_string(&sim).map_err(|e| invalid(e.to_string()))?);
    Ok(())
}
