//! `infer-bench` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use inferbench_core::aggregate::{rank, GroupBy};
use inferbench_core::backend::{DispatchReason, Registry, OPTIMIZED, QUANTIZED, REFERENCE};
use inferbench_core::graph::{
    count_macs, count_params, layer_table, peak_activation_bytes, serialized_weight_bytes, validate,
};
use inferbench_core::kernels::optimized::{OptimizedKernels, Serial};
use inferbench_core::runner::{run_suite, Clock, MacRateClock, Measurement, SuiteConfig, SuiteResult, AUTO};
use inferbench_core::scoring::{aggregate_score, calibrate_profile, ScoreReport, DEFAULT_TOTAL};
use inferbench_core::zoo::{self, calibrate::quantize_graph, WorkloadSpec, TESTS};
use thiserror::Error;

use crate::clock::MonotonicClock;
use crate::export::{self, Format};
use crate::files::{self, FileError, PROFILE_ENV};
use crate::host;
use crate::parallel::Pool;
use crate::results::{self, Header, IngestError, RESULTS_FORMAT};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}

impl From<FileError> for CliError {
    fn from(e: FileError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => CliError::Io(e.to_string()),
            IngestError::Line { .. } => CliError::Validation(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "infer-bench", version, about = "CNN inference benchmark: nine tests, scoring and ranking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the nine tests and write a JSONL result file.
    Run(RunArgs),
    /// Score a result file against a reference profile.
    Score(ScoreArgs),
    /// Derive a reference profile from a result file.
    Calibrate(CalibrateArgs),
    /// Aggregate result files into a ranking table.
    Rank(RankArgs),
    /// Print the layer table and cost summary of one test.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Auto,
    Reference,
    Optimized,
    Quantized,
}

impl BackendChoice {
    pub fn id(self) -> &'static str {
        match self {
            BackendChoice::Auto => AUTO,
            BackendChoice::Reference => REFERENCE,
            BackendChoice::Optimized => OPTIMIZED,
            BackendChoice::Quantized => QUANTIZED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupChoice {
    Device,
    Soc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Markdown,
    Csv,
    Json,
}

impl From<TableFormat> for Format {
    fn from(f: TableFormat) -> Self {
        match f {
            TableFormat::Markdown => Format::Markdown,
            TableFormat::Csv => Format::Csv,
            TableFormat::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "auto")]
    pub backend: BackendChoice,
    /// Worker threads for the blocked kernels.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Resolution and budget multiplier in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Memory probe cap: bytes, or with a K, M or G suffix (powers of 1024).
    #[arg(long, default_value = "256M", value_parser = parse_bytes)]
    pub mem_cap: u64,
    /// Extra multiplier on every time budget.
    #[arg(long, default_value_t = 1.0)]
    pub budget_scale: f64,
    #[arg(long, default_value = "results.jsonl")]
    pub out: PathBuf,
    #[arg(long, env = PROFILE_ENV)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub device: Option<String>,
    #[arg(long)]
    pub soc: Option<String>,
    #[arg(long)]
    pub ram_gb: Option<f64>,
    /// Replace the wall clock with a simulated one charging this many ms per
    /// billion multiply-accumulates.
    #[arg(long, value_name = "MS_PER_GMAC")]
    pub simulated_clock: Option<f64>,
    /// Check the memory probe sizes against the cap without executing them.
    #[arg(long)]
    pub probe_dry_run: bool,
}

/// Validated run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub backend: BackendChoice,
    pub threads: usize,
    pub scale: f64,
    pub seed: u64,
    pub mem_cap_bytes: u64,
    pub budget_scale: f64,
    pub out: PathBuf,
    pub profile: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_args(a: &RunArgs) -> Result<Self, CliError> {
        if !(a.scale.is_finite() && a.scale > 0.0 && a.scale <= 1.0) {
            return Err(CliError::Usage(format!("--scale {} is outside (0, 1]", a.scale)));
        }
        if a.threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        if !(a.budget_scale.is_finite() && a.budget_scale > 0.0) {
            return Err(CliError::Usage(format!("--budget-scale {} is not positive", a.budget_scale)));
        }
        if a.simulated_clock.is_some_and(|r| !(r.is_finite() && r > 0.0)) {
            return Err(CliError::Usage("--simulated-clock must be positive".into()));
        }
        Ok(Self {
            backend: a.backend,
            threads: a.threads,
            scale: a.scale,
            seed: a.seed,
            mem_cap_bytes: a.mem_cap,
            budget_scale: a.budget_scale,
            out: a.out.clone(),
            profile: a.profile.clone(),
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    pub results: PathBuf,
    #[arg(long, env = PROFILE_ENV)]
    pub profile: Option<PathBuf>,
    /// Print the reports as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    pub results: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOTAL)]
    pub total: f64,
    #[arg(long, default_value = "profile.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct RankArgs {
    /// Result files or directories of `.jsonl` files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "device")]
    pub group_by: GroupChoice,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: TableFormat,
    /// Directory receiving `{group_by}-ranking.{ext}`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, env = PROFILE_ENV)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    pub test_id: u8,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

/// Parses `1234`, `64K`, `256M`, `2G` (also `KiB`/`MB` style suffixes).
pub fn parse_bytes(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let n: u64 = num.parse().map_err(|_| format!("`{s}` is not a byte count"))?;
    let shift = match unit.trim().to_ascii_uppercase().as_str() {
        "" | "B" => 0,
        "K" | "KB" | "KIB" => 10,
        "M" | "MB" | "MIB" => 20,
        "G" | "GB" | "GIB" => 30,
        _ => return Err(format!("unknown unit in `{s}`")),
    };
    n.checked_mul(1 << shift).ok_or_else(|| format!("`{s}` is too large"))
}

/// Parses arguments and runs one command, returning the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Run(a) => cmd_run(&a, out, err),
        Command::Score(a) => cmd_score(&a, out),
        Command::Calibrate(a) => cmd_calibrate(&a, out),
        Command::Rank(a) => cmd_rank(&a, out),
        Command::Inspect(a) => cmd_inspect(&a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn test_name(id: u8) -> &'static str {
    TESTS.iter().find(|t| t.test_id == id).map_or("?", |t| t.name)
}

fn backend_note(m: &Measurement) -> String {
    match m.dispatch.as_ref().map(|d| &d.reason) {
        Some(DispatchReason::FallbackUnsupportedOp { node_id, op_kind }) => {
            format!("fallback: {op_kind} at `{node_id}`")
        }
        Some(DispatchReason::ForcedByFlag) => "CPU path".into(),
        Some(DispatchReason::AllOpsSupported) => String::new(),
        None => m.notes.first().cloned().unwrap_or_default(),
    }
}

/// Per-test table printed after `run` and by `score`.
pub fn render_summary(suite: &SuiteResult, report: Option<&ScoreReport>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| test | network | backend | images | avg ms | pass | points | note |");
    let _ = writeln!(s, "|---|---|---|---:|---:|---|---:|---|");
    for m in &suite.measurements {
        let points =
            report.map(|r| format!("{:.2}", r.per_test_points[usize::from(m.test_id) - 1])).unwrap_or_default();
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.2} | {} | {} | {} |",
            m.test_id,
            test_name(m.test_id),
            m.backend_id,
            m.images_processed,
            m.avg_ms,
            if m.passed { "yes" } else { "no" },
            points,
            backend_note(m),
        );
    }
    let mem = &suite.memory;
    let points = report.map(|r| format!("{:.2}", r.per_test_points[8])).unwrap_or_default();
    let _ = writeln!(
        s,
        "| 9 | {} | {} | - | - | {} | {} | {} x 100 px, stopped by {:?} |",
        test_name(9),
        mem.backend_id,
        if mem.max_resolution_units > 0 { "yes" } else { "no" },
        points,
        mem.max_resolution_units,
        mem.limiting_cause,
    );
    if let Some(r) = report {
        let _ = writeln!(s, "\nAI score: {:.2} (profile `{}`)", r.total, r.profile);
    }
    s
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(a)?;
    let profile = files::resolve_profile(cfg.profile.as_deref())?;
    let pool = Pool::new(cfg.threads).map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    let registry = Registry::with_builtins(pool);

    let mut suite_cfg = SuiteConfig::new(cfg.backend.id(), cfg.scale, cfg.seed);
    let env = &mut suite_cfg.environment;
    env.host_id = host::hostname();
    env.threads = cfg.threads;
    env.mem_cap_bytes = cfg.mem_cap_bytes;
    env.budget_scale = cfg.budget_scale;
    suite_cfg.probe_execute = !a.probe_dry_run;

    let mut wall = MonotonicClock::new();
    let mut simulated = a.simulated_clock.map(MacRateClock::new);
    let clock: &mut dyn Clock = match simulated.as_mut() {
        Some(c) => c,
        None => &mut wall,
    };
    let mut progress = |m: &Measurement| {
        let _ = writeln!(err, "test {} done on {} ({} images)", m.test_id, m.backend_id, m.images_processed);
    };
    let suite = run_suite(&suite_cfg, &registry, clock, &mut progress).map_err(|e| CliError::Usage(e.to_string()))?;
    let report = aggregate_score(&suite, &profile).map_err(|e| CliError::Validation(e.to_string()))?;

    let header = Header {
        format: RESULTS_FORMAT.into(),
        device_name: a.device.clone().unwrap_or_else(host::hostname),
        soc_name: a.soc.clone().unwrap_or_else(host::cpu_model),
        ram_gb: a.ram_gb.unwrap_or_else(host::ram_gb),
        environment: suite.environment.clone(),
    };
    let mut buf = Vec::new();
    results::write_suite(&mut buf, &header, &suite, Some(&report)).map_err(|e| io_err(&cfg.out, e))?;
    fs::write(&cfg.out, buf).map_err(|e| io_err(&cfg.out, e))?;

    emit(out, &render_summary(&suite, Some(&report)))?;
    emit(out, &format!("results written to {}\n", cfg.out.display()))
}

fn load_records(path: &Path) -> Result<Vec<inferbench_core::aggregate::DeviceRecord>, CliError> {
    let records = results::ingest(path)?;
    if records.is_empty() {
        return Err(CliError::Validation(format!("{}: no suite results", path.display())));
    }
    Ok(records)
}

fn cmd_score(a: &ScoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let profile = files::resolve_profile(a.profile.as_deref())?;
    let records = load_records(&a.results)?;
    let mut reports = Vec::with_capacity(records.len());
    for r in &records {
        reports.push(aggregate_score(&r.suite, &profile).map_err(|e| CliError::Validation(e.to_string()))?);
    }
    if a.json {
        let text = serde_json::to_string_pretty(&reports).map_err(|e| CliError::Validation(e.to_string()))?;
        return emit(out, &(text + "\n"));
    }
    for (r, report) in records.iter().zip(&reports) {
        emit(out, &format!("{} ({})\n", r.device_name, r.soc_name))?;
        emit(out, &render_summary(&r.suite, Some(report)))?;
    }
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let records = load_records(&a.results)?;
    if records.len() != 1 {
        return Err(CliError::Validation(format!(
            "{}: expected one suite, found {}",
            a.results.display(),
            records.len()
        )));
    }
    let r = &records[0];
    let name = a.name.clone().unwrap_or_else(|| format!("{} ({})", r.device_name, r.soc_name));
    let profile = calibrate_profile(&r.suite, a.total, &name).map_err(|e| CliError::Validation(e.to_string()))?;
    files::save_profile(&a.out, &profile)?;
    emit(out, &format!("profile `{}` written to {} (total {})\n", profile.name, a.out.display(), a.total))
}

fn cmd_rank(a: &RankArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let profile = files::resolve_profile(a.profile.as_deref())?;
    let records = results::ingest_paths(&a.inputs)?;
    let group_by = match a.group_by {
        GroupChoice::Device => GroupBy::Device,
        GroupChoice::Soc => GroupBy::Soc,
    };
    let rows = rank(&records, group_by, &profile).map_err(|e| CliError::Validation(e.to_string()))?;
    let format = Format::from(a.format);
    let text = export::render(&rows, format).map_err(|e| CliError::Validation(e.to_string()))?;
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let path = a.out.join(format!("{group_by}-ranking.{}", format.extension()));
    fs::write(&path, &text).map_err(|e| io_err(&path, e))?;
    emit(out, &text)?;
    emit(out, &format!("{} rows written to {}\n", rows.len(), path.display()))
}

fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = WorkloadSpec::new(a.test_id, a.scale, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let invalid = |e: &dyn std::fmt::Display| CliError::Validation(e.to_string());
    let float = validate(spec.architecture.build(spec.input_resolution, spec.seed).map_err(|e| invalid(&e))?)
        .map_err(|e| invalid(&e))?;
    // Weight shapes do not depend on resolution, so the int8 variant is
    // calibrated at the architecture's smallest input.
    let side = spec.architecture.min_side();
    let small = validate(spec.architecture.build((side, side), spec.seed).map_err(|e| invalid(&e))?)
        .map_err(|e| invalid(&e))?;
    let image = zoo::generate_image((side, side), spec.seed);
    let int8 = validate(quantize_graph(&small, &image, &OptimizedKernels::new(Serial)).map_err(|e| invalid(&e))?)
        .map_err(|e| invalid(&e))?;

    let shape = spec.input_shape();
    let mut s = String::new();
    let (h, w) = spec.input_resolution;
    let _ = writeln!(s, "test {}: {} ({}), {h}x{w}", spec.test_id, spec.name, spec.architecture);
    if let Some(alias) = spec.aliases() {
        let _ = writeln!(s, "aliases test {alias}: same graph, run as the memory probe");
    }
    let _ = writeln!(
        s,
        "quantized: {}, accelerator eligible: {}, budget: {}",
        spec.quantized,
        spec.accelerator_eligible,
        spec.time_budget_s.map_or("none".to_string(), |b| format!("{b} s")),
    );
    let _ = writeln!(s, "\n| layer | op | output | params | MACs |");
    let _ = writeln!(s, "|---|---|---|---:|---:|");
    for row in layer_table(&float) {
        let [n, oh, ow, oc] = row.output_shape;
        let _ = writeln!(s, "| {} | {} | {n}x{oh}x{ow}x{oc} | {} | {} |", row.id, row.kind, row.params, row.macs);
    }
    let macs = count_macs(&float, shape).map_err(|e| invalid(&e))?;
    let peak = peak_activation_bytes(&float, shape).map_err(|e| invalid(&e))?;
    let (fb, qb) = (serialized_weight_bytes(&float), serialized_weight_bytes(&int8));
    let _ = writeln!(s, "\nlayers: {}", float.nodes().len());
    let _ = writeln!(s, "params: {}", count_params(&float));
    let _ = writeln!(s, "MACs: {macs}");
    let _ = writeln!(s, "peak activation bytes (float32): {peak}");
    let _ = writeln!(s, "weight bytes: float32 {fb}, int8 {qb} (ratio {:.3})", fb as f64 / qb as f64);
    emit(out, &s)
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    main_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
