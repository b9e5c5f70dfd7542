//! Command-line front end.
//!
//! Every subcommand validates its whole configuration before computing and
//! writes nothing until the computation has succeeded. Files are written to
//! a temporary sibling and renamed into place.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 inconclusive verdict under `--strict`, 1 I/O failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::asymptotic::{AsymptoticNumber, Decision, Defect, SeriesError};
use crate::flows::{
    default_stride, gronwall_envelope, steps_for, walk, AdequalityReport, DeviationReport,
    Envelope, FitRecord, FlowError, PrevectorField, ScaleParameter, SweepRow, Trajectory, Verdict,
};
use crate::format::float17;
use crate::pendulum::{
    self, amplitude_sweep, choose_lambda, make_fields, mesh_sweep, rescaled_adequality_check,
    write_period_csv, FieldPair, LambdaPolicy, PendulumError, PendulumParams,
};

const SUBCOMMANDS: [&str; 5] = ["walk", "compare", "period", "series", "gronwall"];

#[derive(Debug, Parser)]
#[command(
    name = "hyperwalk",
    version,
    about = "Euler walks of prevector fields, adequality sweeps and pendulum periods",
    long_about = "Euler walks of prevector fields, adequality sweeps and pendulum periods.\n\n\
        Units: angles in radians, g in length/time², ℓ in length, times and meshes λ in \
        time units. The pendulum state is z = x + i·ẋ/ω with ω = √(g/ℓ).\n\n\
        Exit codes: 0 success, 2 invalid configuration, 3 numerical failure, \
        4 inconclusive verdict with --strict, 1 I/O failure.",
    args_override_self = true
)]
pub struct Cli {
    /// `key=value` file of defaults; keys are long flag names of the
    /// subcommand (for example `amplitude=0.1`). Flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Exit with status 4 when a fitted verdict is inconclusive.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Walk one pendulum field and write the trajectory (columns n,t,re,im).
    Walk(WalkArgs),
    /// Deviation sweep between two walks, with Gronwall envelope and power-law fit.
    Compare(CompareArgs),
    /// Period table of the nonlinear and rotation walks over an amplitude sweep.
    Period(PeriodArgs),
    /// Rescaled series check of δ_F/δ_E and a seeded sin²+cos² identity check.
    Series(SeriesArgs),
    /// Tabulate the Gronwall bound (η/K)(e^{Kt} − 1) (columns t,bound).
    Gronwall(GronwallArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldChoice {
    /// F: z ↦ z + λω(y − i sin x)
    Nonlinear,
    /// E: z ↦ z − iλωz
    Linear,
    /// H: exact rotation by λω
    Rotation,
    /// The zero field; every step returns its input
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairChoice {
    /// E against H
    LinearRotation,
    /// F against E
    NonlinearLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepChoice {
    /// Vary the mesh λ at fixed amplitude
    Lambda,
    /// Vary the amplitude at fixed mesh
    Amplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct PendulumArgs {
    /// Gravitational acceleration [length/time²]
    #[arg(long, default_value_t = 1.0)]
    pub g: f64,
    /// Rod length ℓ [length]
    #[arg(long, default_value_t = 1.0)]
    pub length: f64,
}

impl PendulumArgs {
    fn params(&self, amplitude: f64) -> Result<PendulumParams, CliError> {
        Ok(PendulumParams::new(self.g, self.length, amplitude)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct WalkArgs {
    #[arg(long, value_enum, default_value = "nonlinear")]
    pub field: FieldChoice,
    #[command(flatten)]
    pub pendulum: PendulumArgs,
    /// Release angle a [rad]; the walk starts at z0 = a
    #[arg(long, default_value_t = 0.1)]
    pub amplitude: f64,
    /// Mesh λ [time]; overrides --steps-per-period
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Steps per linear period 2π/ω, giving λ = 2π/(ωN)
    #[arg(long, default_value_t = 10_000)]
    pub steps_per_period: u64,
    /// Horizon [time]; defaults to one linear period
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Record every k-th step; defaults to about 10⁴ rows
    #[arg(long)]
    pub stride: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
    /// Output file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long, value_enum, default_value = "linear-rotation")]
    pub pair: PairChoice,
    #[arg(long, value_enum, default_value = "lambda")]
    pub sweep: SweepChoice,
    #[command(flatten)]
    pub pendulum: PendulumArgs,
    /// Meshes λ [time] for a mesh sweep, strictly decreasing
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4, 1e-5])]
    pub lambdas: Vec<f64>,
    /// Amplitudes [rad] for an amplitude sweep, strictly decreasing
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.025])]
    pub amplitudes: Vec<f64>,
    /// Amplitude [rad] held fixed in a mesh sweep
    #[arg(long, default_value_t = 0.1)]
    pub amplitude: f64,
    /// Mesh λ [time] held fixed in an amplitude sweep
    #[arg(long, default_value_t = 1e-5)]
    pub lambda: f64,
    /// Horizon [time]
    #[arg(long, default_value_t = 10.0)]
    pub t_final: f64,
    /// Radius of the disk on which η is measured; defaults to a disk
    /// containing both walks
    #[arg(long)]
    pub radius: Option<f64>,
    /// Output JSON file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PeriodArgs {
    #[command(flatten)]
    pub pendulum: PendulumArgs,
    /// Amplitudes [rad], strictly decreasing, at least three
    #[arg(long, value_delimiter = ',', default_values_t = pendulum::DEFAULT_AMPLITUDES)]
    pub amplitudes: Vec<f64>,
    /// Steps per linear period at the coarsest mesh (at least 10⁴)
    #[arg(long, default_value_t = pendulum::REPORT_MIN_STEPS_PER_PERIOD)]
    pub steps_per_period: u64,
    /// Number of meshes, each halving the previous
    #[arg(long, default_value_t = 3)]
    pub refinements: usize,
    /// Full oscillations averaged per period measurement
    #[arg(long, default_value_t = 3)]
    pub oscillations: u32,
    /// Horizon of the walk deviation sweeps [linear periods]
    #[arg(long, default_value_t = 3.0)]
    pub deviation_periods: f64,
    /// Output directory; receives period_nonlinear.csv, period_rotation.csv,
    /// period_summary.json and adequality.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SeriesArgs {
    /// Number of retained coefficients beyond the leading one
    #[arg(long, default_value_t = crate::asymptotic::DEFAULT_TRUNCATION)]
    pub truncation: usize,
    /// Sample points Z as `re:im` with 0 < |Z| ≤ 1
    #[arg(long = "z", value_delimiter = ',', default_values = ["1:0", "0:1"], value_parser = parse_complex)]
    pub samples: Vec<Complex64>,
    /// Extra sample points drawn uniformly on the unit circle
    #[arg(long, default_value_t = 0)]
    pub random_samples: usize,
    /// Random series fed to the sin²+cos² check
    #[arg(long, default_value_t = 100)]
    pub identity_checks: usize,
    /// Seed of the random draws
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional JSON output file; a summary is always printed
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GronwallArgs {
    /// Per-step discrepancy coefficient η [length/time]
    #[arg(long)]
    pub eta: f64,
    /// Lipschitz constant K [1/time]
    #[arg(long)]
    pub lipschitz: f64,
    /// Largest time [time]
    #[arg(long, default_value_t = 10.0)]
    pub t_max: f64,
    /// Number of equal intervals of [0, t_max]
    #[arg(long, default_value_t = 100)]
    pub intervals: usize,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let (re, im) = s
        .split_once(':')
        .ok_or_else(|| format!("expected re:im, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok(Complex64::new(parse(re)?, parse(im)?))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Inconclusive(_) => 4,
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::WalkTerminated { .. } | FlowError::Inconclusive(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SeriesError> for CliError {
    fn from(e: SeriesError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<PendulumError> for CliError {
    fn from(e: PendulumError) -> Self {
        let numerical = match innermost(&e) {
            PendulumError::InvalidParams(_) => false,
            PendulumError::NoFullOscillation | PendulumError::Series(_) => true,
            PendulumError::Flow(f) => {
                matches!(
                    f,
                    FlowError::WalkTerminated { .. } | FlowError::Inconclusive(_)
                )
            }
            PendulumError::AtAmplitude { .. } => unreachable!(),
        };
        if numerical {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

fn innermost(e: &PendulumError) -> &PendulumError {
    match e {
        PendulumError::AtAmplitude { source, .. } => innermost(source),
        other => other,
    }
}

fn config_error(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Parses a `key=value` file. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("config line {}: expected key=value", i + 1))
        })?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(CliError::Config(format!(
                "config line {}: bad key {k:?}",
                i + 1
            )));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn find_config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Splices config-file entries in as flags right after the subcommand.
/// Keys also given on the command line are dropped, so list flags are
/// replaced rather than appended to.
pub fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = find_config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_config(&text)?;
    let Some(pos) = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(args);
    };
    let given: Vec<String> = args
        .iter()
        .filter_map(|a| {
            let s = a.to_string_lossy();
            let name = s.strip_prefix("--")?;
            Some(name.split('=').next().unwrap_or(name).to_string())
        })
        .collect();
    let mut merged: Vec<OsString> = args[..=pos].to_vec();
    for (k, v) in entries {
        if given.contains(&k) {
            continue;
        }
        if v == "true" {
            merged.push(format!("--{k}").into());
        } else if v != "false" {
            merged.push(format!("--{k}={v}").into());
        }
    }
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}

/// Entry point used by the binary.
pub fn main_from_env() -> ExitCode {
    run_with_args(std::env::args_os().collect(), &mut std::io::stdout())
}

/// Parses `args` (program name first), runs, and maps the outcome to an exit code.
pub fn run_with_args(args: Vec<OsString>, stdout: &mut dyn Write) -> ExitCode {
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("hyperwalk: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli, stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hyperwalk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Walk(a) => run_walk(a),
        Command::Compare(a) => run_compare(a, cli.strict),
        Command::Period(a) => run_period(a, cli.strict),
        Command::Series(a) => run_series(a, stdout),
        Command::Gronwall(a) => run_gronwall(a),
    }
}

/// Writes through a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = fs::write(&tmp, bytes).and_then(|()| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes<F>(fill: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w)
            .and_then(|()| Ok(w.flush()?))
            .map_err(|e| CliError::Numerical(e.to_string()))?;
    }
    Ok(buf)
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn walk_field(
    args: &WalkArgs,
    params: &PendulumParams,
    mesh: f64,
) -> Result<PrevectorField, CliError> {
    let fields = make_fields(params, mesh)?;
    Ok(match args.field {
        FieldChoice::Nonlinear => fields.nonlinear,
        FieldChoice::Linear => fields.linear,
        FieldChoice::Rotation => fields.rotation,
        FieldChoice::Zero => PrevectorField::displacement(crate::flows::VectorField::zero(), mesh)?,
    })
}

fn run_walk(args: &WalkArgs) -> Result<(), CliError> {
    let params = args.pendulum.params(args.amplitude)?;
    let mesh = match args.lambda {
        Some(l) => positive("lambda", l)?,
        None => choose_lambda(params.omega(), args.steps_per_period)?,
    };
    let t_final = positive(
        "t-final",
        args.t_final.unwrap_or_else(|| params.linear_period()),
    )?;
    let steps = steps_for(t_final, mesh);
    if steps == 0 {
        return Err(config_error(FlowError::MeshNotSmallerThanHorizon {
            mesh,
            horizon: t_final,
        }));
    }
    let stride = args.stride.unwrap_or_else(|| default_stride(steps));
    if stride == 0 {
        return Err(config_error(FlowError::InvalidStride));
    }
    let field = walk_field(args, &params, mesh)?;
    let traj = walk(&field, params.initial_state(), steps, stride)?;
    if let Some(stop) = traj.terminated_early {
        return Err(CliError::Numerical(format!(
            "walk stopped at step {} ({:?}); no output written",
            stop.step, stop.reason
        )));
    }
    let bytes = match args.format {
        OutputFormat::Csv => trajectory_csv(&traj)?,
        OutputFormat::Json => to_json(&traj)?,
    };
    write_atomic(&args.out, &bytes)
}

fn trajectory_csv(traj: &Trajectory) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(buf)
}

#[derive(Debug, Serialize)]
struct EnvelopeRecord {
    scale: f64,
    eta: f64,
    lipschitz: f64,
    bound_at_t_final: f64,
    violations: u64,
    worst_ratio: f64,
    steps_compared: u64,
}

#[derive(Debug, Serialize)]
struct CompareOutput {
    pair: &'static str,
    parameter: ScaleParameter,
    t_final: f64,
    rows: Vec<SweepRow>,
    fit: FitRecord,
    note: Option<String>,
    envelope: Vec<EnvelopeRecord>,
}

fn envelope_records(
    report: &AdequalityReport,
    runs: &[DeviationReport],
    t: f64,
) -> Vec<EnvelopeRecord> {
    report
        .rows
        .iter()
        .zip(runs)
        .filter_map(|(row, run)| {
            run.envelope_check.map(|c| EnvelopeRecord {
                scale: row.scale,
                eta: c.envelope.eta,
                lipschitz: c.envelope.lipschitz,
                bound_at_t_final: c.envelope.bound(t),
                violations: c.violations,
                worst_ratio: c.worst_ratio,
                steps_compared: run.steps_compared,
            })
        })
        .collect()
}

fn check_decreasing(name: &str, xs: &[f64]) -> Result<(), CliError> {
    if xs.len() < 3 {
        return Err(CliError::Config(format!("{name}: need at least 3 values")));
    }
    if !xs.windows(2).all(|w| w[1] < w[0]) {
        return Err(CliError::Config(format!(
            "{name} must be strictly decreasing"
        )));
    }
    xs.iter().try_for_each(|&x| positive(name, x).map(|_| ()))
}

fn run_compare(args: &CompareArgs, strict: bool) -> Result<(), CliError> {
    let params = args.pendulum.params(args.amplitude)?;
    let t_final = positive("t-final", args.t_final)?;
    if let Some(r) = args.radius {
        positive("radius", r)?;
    }
    let (pair, pair_name) = match args.pair {
        PairChoice::LinearRotation => (FieldPair::LinearRotation, "linear-rotation"),
        PairChoice::NonlinearLinear => (FieldPair::NonlinearLinear, "nonlinear-linear"),
    };
    let (report, runs) = match args.sweep {
        SweepChoice::Lambda => {
            check_decreasing("lambdas", &args.lambdas)?;
            mesh_sweep(&params, pair, &args.lambdas, t_final, args.radius)?
        }
        SweepChoice::Amplitude => {
            check_decreasing("amplitudes", &args.amplitudes)?;
            for &a in &args.amplitudes {
                params.with_amplitude(a)?;
            }
            positive("lambda", args.lambda)?;
            amplitude_sweep(
                &params,
                pair,
                &args.amplitudes,
                args.lambda,
                t_final,
                args.radius,
            )?
        }
    };
    let output = CompareOutput {
        pair: pair_name,
        parameter: report.parameter,
        t_final,
        rows: report.rows.clone(),
        fit: report.fit_record(),
        note: report.note.clone(),
        envelope: envelope_records(&report, &runs, t_final),
    };
    write_atomic(&args.out, &to_json(&output)?)?;
    strict_check(strict, report.verdict, report.note.as_deref())
}

fn strict_check(strict: bool, verdict: Verdict, note: Option<&str>) -> Result<(), CliError> {
    if strict && verdict == Verdict::Inconclusive {
        return Err(CliError::Inconclusive(
            note.unwrap_or("fitted exponent between the decision thresholds")
                .to_string(),
        ));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepOutput<'a> {
    rows: &'a [SweepRow],
    fit: FitRecord,
    note: Option<&'a str>,
    envelope: Vec<EnvelopeRecord>,
}

impl<'a> SweepOutput<'a> {
    fn new(report: &'a AdequalityReport, runs: &[DeviationReport], t_final: f64) -> Self {
        Self {
            rows: &report.rows,
            fit: report.fit_record(),
            note: report.note.as_deref(),
            envelope: envelope_records(report, runs, t_final),
        }
    }
}

#[derive(Debug, Serialize)]
struct AdequalityOutput<'a> {
    t_final: f64,
    nonlinear_vs_linear_amplitude: SweepOutput<'a>,
    linear_vs_rotation_lambda: SweepOutput<'a>,
}

fn run_period(args: &PeriodArgs, strict: bool) -> Result<(), CliError> {
    let params = args
        .pendulum
        .params(args.amplitudes.first().copied().unwrap_or(0.1))?;
    let policy = LambdaPolicy {
        steps_per_period: args.steps_per_period,
        refinements: args.refinements,
        oscillations: args.oscillations,
        deviation_periods: args.deviation_periods,
    };
    let report = pendulum::small_oscillation_report(&args.amplitudes, &params, &policy)?;
    let t_final = policy.deviation_periods * params.linear_period();

    let nonlinear = period_csv(&report.nonlinear_rows)?;
    let rotation = period_csv(&report.rotation_rows)?;
    let summary = to_json(&report.summary)?;
    let adequality = to_json(&AdequalityOutput {
        t_final,
        nonlinear_vs_linear_amplitude: SweepOutput::new(
            &report.linear_vs_nonlinear,
            &report.linear_vs_nonlinear_runs,
            t_final,
        ),
        linear_vs_rotation_lambda: SweepOutput::new(
            &report.linear_vs_rotation,
            &report.linear_vs_rotation_runs,
            t_final,
        ),
    })?;

    fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("period_nonlinear.csv"), &nonlinear)?;
    write_atomic(&args.out.join("period_rotation.csv"), &rotation)?;
    write_atomic(&args.out.join("adequality.json"), &adequality)?;
    write_atomic(&args.out.join("period_summary.json"), &summary)?;
    strict_check(strict, report.summary.verdict, None)
}

fn period_csv(rows: &[pendulum::PeriodRow]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_period_csv(rows, &mut buf).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok(buf)
}

#[derive(Debug, Serialize)]
struct RescaledRecord {
    z_re: f64,
    z_im: f64,
    ratio: String,
    order1: [f64; 2],
    order2: [f64; 2],
    adequal: String,
    defect: String,
}

#[derive(Debug, Serialize)]
struct SeriesOutput {
    truncation: usize,
    seed: u64,
    rescaled: Vec<RescaledRecord>,
    identity_checks: usize,
    identity_max_residual: f64,
}

fn describe_decision(d: Decision) -> String {
    match d {
        Decision::Holds => "holds".into(),
        Decision::Fails => "fails".into(),
        Decision::Undecidable {
            through_order,
            truncated_answer,
        } => format!(
            "undecidable through order {through_order} (truncated answer {truncated_answer})"
        ),
    }
}

fn describe_defect(d: Defect) -> String {
    match d {
        Defect::None => "none".into(),
        Defect::VanishesThrough(k) => format!("vanishes through order {k}"),
        Defect::Leading { order, coeff } => format!("order {order}, coefficient {coeff}"),
    }
}

fn random_series(rng: &mut ChaCha8Rng, truncation: usize) -> AsymptoticNumber {
    let lead = rng.gen_range(0..=2);
    let coeffs = (0..=truncation)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    AsymptoticNumber::from_coeffs(lead, coeffs, truncation)
}

fn run_series(args: &SeriesArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if args.truncation < 2 {
        return Err(CliError::Config("truncation must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut samples = args.samples.clone();
    samples.extend(
        (0..args.random_samples)
            .map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))),
    );
    let rows = rescaled_adequality_check(&samples, 1.0, args.truncation)?;

    let one = AsymptoticNumber::constant(1.0, args.truncation);
    let mut worst = 0.0f64;
    for _ in 0..args.identity_checks {
        let s = random_series(&mut rng, args.truncation);
        let (sin, cos) = (s.sin()?, s.cos()?);
        let residual = sin
            .checked_mul(&sin)?
            .checked_add(&cos.checked_mul(&cos)?)?
            .checked_sub(&one)?;
        worst = residual
            .coefficients()
            .iter()
            .map(|c| c.norm())
            .fold(worst, f64::max);
    }

    let rescaled: Vec<RescaledRecord> = rows
        .iter()
        .map(|r| RescaledRecord {
            z_re: r.z.re,
            z_im: r.z.im,
            ratio: r.ratio.to_string(),
            order1: [r.order1.re, r.order1.im],
            order2: [r.order2.re, r.order2.im],
            adequal: describe_decision(r.adequal),
            defect: describe_defect(r.defect),
        })
        .collect();
    for r in &rescaled {
        writeln!(stdout, "Z = {}{:+}i: δ_F/δ_E = {}", r.z_re, r.z_im, r.ratio)?;
        writeln!(
            stdout,
            "    adequal to δ_E: {}; defect {}",
            r.adequal, r.defect
        )?;
    }
    writeln!(
        stdout,
        "sin²+cos²−1 over {} seeded series: max coefficient {:.3e}",
        args.identity_checks, worst
    )?;
    if let Some(out) = &args.out {
        let output = SeriesOutput {
            truncation: args.truncation,
            seed: args.seed,
            rescaled,
            identity_checks: args.identity_checks,
            identity_max_residual: worst,
        };
        write_atomic(out, &to_json(&output)?)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BoundRow {
    t: f64,
    bound: f64,
}

fn run_gronwall(args: &GronwallArgs) -> Result<(), CliError> {
    gronwall_envelope(args.eta, args.lipschitz, args.t_max)?;
    if args.intervals == 0 {
        return Err(CliError::Config("intervals must be positive".into()));
    }
    let envelope = Envelope {
        eta: args.eta,
        lipschitz: args.lipschitz,
    };
    let rows: Vec<BoundRow> = (0..=args.intervals)
        .map(|i| {
            let t = args.t_max * i as f64 / args.intervals as f64;
            BoundRow {
                t,
                bound: envelope.bound(t),
            }
        })
        .collect();
    let bytes = match args.format {
        OutputFormat::Json => to_json(&rows)?,
        OutputFormat::Csv => csv_bytes(|w| {
            w.write_record(["t", "bound"])?;
            for r in &rows {
                w.write_record([float17(r.t), float17(r.bound)])?;
            }
            Ok(())
        })?,
    };
    write_atomic(&args.out, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines_become_flags_before_user_flags() {
        let map = parse_config("# c\namplitude = 0.2\nt_final=3\n\n").unwrap();
        assert_eq!(map["amplitude"], "0.2");
        assert_eq!(map["t-final"], "3");
        assert!(parse_config("oops").is_err());
    }

    #[test]
    fn complex_parser() {
        assert_eq!(parse_complex("0.5:-1").unwrap(), Complex64::new(0.5, -1.0));
        assert!(parse_complex("1").is_err());
    }

    #[test]
    fn later_flag_wins() {
        let cli = Cli::try_parse_from([
            "hyperwalk",
            "walk",
            "--amplitude=0.2",
            "--out",
            "x",
            "--amplitude",
            "0.3",
        ])
        .unwrap();
        let Command::Walk(w) = cli.command else {
            panic!()
        };
        assert_eq!(w.amplitude, 0.3);
    }
}
