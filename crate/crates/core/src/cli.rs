//! Command-line front end and the file layout of a campaign directory.
//!
//! ```text
//! <output>/config.json       configuration as run
//! <output>/checkpoint.json   state after the latest record
//! <output>/trace.jsonl       one record per line
//! <output>/summary.json      final answer and totals
//! ```
//!
//! A relative `output_dir` is resolved against `$MFBO_OUTPUT_ROOT` when set.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or input,
//! 3 evaluator failure limit, degenerate curve or other evaluation failure.

use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::CampaignConfig;
use crate::engine::{Campaign, CampaignResult, EngineState, Provenance, Record, Termination};
use crate::error::{Error, Result};
use crate::geometry::{coil_path, export_path, CoilParams, ExportFormat};
use crate::plots::{read_trace_path, write_figure, write_trace_line, Figure};
use crate::rtd::{fit_tanks_in_series_with, tanks_in_series_curve, to_dimensionless, FitMethod, RtdCurve, DEFAULT_N_MAX};

pub const OUTPUT_ROOT_ENV: &str = "MFBO_OUTPUT_ROOT";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";
const CHECKPOINT_VERSION: u32 = 1;

pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const INPUT: i32 = 2;
    pub const FAILURE: i32 = 3;
}

macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(io::stdout().lock(), $($arg)*);
    }};
}

fn at(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

fn is_broken_pipe(e: &Error) -> bool {
    let io = match e {
        Error::Io(io) => Some(io),
        Error::Csv(c) => match c.kind() {
            csv::ErrorKind::Io(io) => Some(io),
            _ => None,
        },
        _ => None,
    };
    io.is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
        || matches!(e, Error::Json(j) if j.io_error_kind() == Some(io::ErrorKind::BrokenPipe))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => exit::IO,
        Error::Config(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::DimensionMismatch { .. }
        | Error::Domain(_)
        | Error::Checkpoint(_) => exit::INPUT,
        Error::Interrupted(_) => exit::OK,
        _ => exit::FAILURE,
    }
}

/// Where the next evaluation's seeds come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedCursor {
    pub base_seed: u64,
    pub iteration: usize,
    pub next_record: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config: CampaignConfig,
    pub seed_cursor: SeedCursor,
    pub state: EngineState,
}

impl Checkpoint {
    /// Curves live in the trace only; the engine never reads them back.
    pub fn new(config: &CampaignConfig, state: &EngineState) -> Self {
        let mut state = state.clone();
        for r in &mut state.dataset.records {
            r.curve = None;
        }
        Self {
            version: CHECKPOINT_VERSION,
            config_hash: config.hash(),
            config: config.clone(),
            seed_cursor: SeedCursor {
                base_seed: state.settings.seed,
                iteration: state.iteration,
                next_record: state.dataset.len(),
            },
            state,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| at(path)(e.into()))?;
        let cp: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", cp.version)));
        }
        let hash = cp.config.hash();
        if hash != cp.config_hash {
            return Err(Error::Checkpoint(format!(
                "config hash mismatch: checkpoint records {}, stored config hashes to {hash}",
                cp.config_hash
            )));
        }
        let mut expected = cp.config.settings()?;
        expected.doe_threads = cp.state.settings.doe_threads;
        if expected != cp.state.settings {
            return Err(Error::Checkpoint("engine settings do not match the stored config".into()));
        }
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer(&mut w, self)?;
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// Final summary written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub x_star: Vec<f64>,
    pub design_names: Vec<String>,
    pub y_star: f64,
    pub z_star: Vec<f64>,
    pub fidelity_names: Vec<String>,
    pub termination_reason: String,
    pub totals: Totals,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub evaluations: usize,
    pub doe: usize,
    pub acquisition: usize,
    pub greedy: usize,
    pub failures: usize,
    pub iterations: usize,
    pub budget_total: f64,
    pub budget_spent: f64,
    pub budget_units: String,
    pub doe_cost: f64,
    pub total_cost: f64,
}

impl Summary {
    pub fn new(config: &CampaignConfig, result: &CampaignResult) -> Self {
        let recs = &result.trace.records;
        let count = |p: Provenance| recs.iter().filter(|r| r.provenance == p).count();
        Self {
            x_star: result.x_star.clone(),
            design_names: config.design.iter().map(|v| v.name.clone()).collect(),
            y_star: result.y_star,
            z_star: result.z_star.clone(),
            fidelity_names: config.fidelity.iter().map(|v| v.name.clone()).collect(),
            termination_reason: result.termination.as_str().into(),
            totals: Totals {
                evaluations: recs.len(),
                doe: count(Provenance::Doe),
                acquisition: count(Provenance::Acquisition),
                greedy: count(Provenance::Greedy),
                failures: recs.iter().filter(|r| r.failed).count(),
                iterations: result.iterations,
                budget_total: result.budget.total,
                budget_spent: result.budget.spent,
                budget_units: config.budget_units.clone(),
                doe_cost: recs.iter().filter(|r| r.provenance == Provenance::Doe).map(|r| r.cost).sum(),
                total_cost: recs.iter().map(|r| r.cost).sum(),
            },
            config_hash: config.hash(),
        }
    }
}

/// Resolves the campaign directory for a config.
pub fn output_dir(config: &CampaignConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(&config.output_dir),
        _ => config.output_dir.clone(),
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub doe_threads: Option<usize>,
    /// Pause once the trace holds this many records.
    pub stop_after: Option<usize>,
    pub quiet: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Finished(Summary),
    Paused(usize),
}

fn progress_line(config: &CampaignConfig, r: &Record) -> String {
    let y = r.objective.map_or_else(|| "failed".to_string(), |y| format!("{y:.5}"));
    format!(
        "[{:>4}] {:<11} it={:<3} z={:?} y={} cost={:.4} remaining={:.4} {}",
        r.index,
        r.provenance.as_str(),
        r.iteration,
        r.z,
        y,
        r.cost,
        r.remaining_budget,
        config.budget_units
    )
}

/// Runs or continues a campaign whose files live in `dir`.
pub fn drive(config: &CampaignConfig, mut state: EngineState, dir: &Path, opts: &RunOptions) -> Result<RunStatus> {
    if let Some(t) = opts.doe_threads {
        if t == 0 {
            return Err(Error::Config("doe-threads must be at least 1".into()));
        }
        state.settings.doe_threads = t;
    }
    let checkpoint_path = dir.join(CHECKPOINT_FILE);
    let mut trace = BufWriter::new(OpenOptions::new().create(true).append(true).open(dir.join(TRACE_FILE))?);
    let evaluator = config.evaluator.build()?;
    let mut campaign = Campaign::from_state(state, evaluator.as_ref())?;
    let mut observer = |s: &EngineState, r: &Record| -> Result<()> {
        Checkpoint::new(config, s).save(&checkpoint_path)?;
        write_trace_line(r, &mut trace)?;
        trace.flush()?;
        if !opts.quiet {
            eprintln!("{}", progress_line(config, r));
        }
        match opts.stop_after {
            Some(n) if s.dataset.len() >= n && !s.is_finished() => Err(Error::Interrupted(s.dataset.len())),
            _ => Ok(()),
        }
    };
    if opts.stop_after.is_some_and(|n| campaign.state().dataset.len() >= n && !campaign.state().is_finished()) {
        return Ok(RunStatus::Paused(campaign.state().dataset.len()));
    }
    let result = match campaign.run(&mut observer) {
        Ok(r) => r,
        Err(Error::Interrupted(n)) => return Ok(RunStatus::Paused(n)),
        Err(e) => return Err(e),
    };
    drop(observer);
    let summary = Summary::new(config, &result);
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(RunStatus::Finished(summary))
}

/// Starts a fresh campaign in `dir`.
pub fn start(config: &CampaignConfig, dir: &Path, opts: &RunOptions) -> Result<RunStatus> {
    let state = EngineState::new(config.settings()?)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(CONFIG_FILE), config.to_json() + "\n")?;
    File::create(dir.join(TRACE_FILE))?;
    let _ = fs::remove_file(dir.join(SUMMARY_FILE));
    Checkpoint::new(config, &state).save(&dir.join(CHECKPOINT_FILE))?;
    drive(config, state, dir, opts)
}

/// Continues from a checkpoint, rewriting the trace to match it.
pub fn resume(checkpoint: &Path, opts: &RunOptions) -> Result<RunStatus> {
    let cp = Checkpoint::load(checkpoint)?;
    let dir = checkpoint.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let trace_path = dir.join(TRACE_FILE);
    let kept: Vec<Record> = read_trace_path(&trace_path).unwrap_or_default();
    let n = cp.state.dataset.len();
    let consistent = kept.len() >= n
        && kept.iter().zip(&cp.state.dataset.records).all(|(a, b)| {
            let mut a = a.clone();
            a.curve = None;
            a == *b
        });
    {
        let mut w = BufWriter::new(File::create(&trace_path)?);
        let source = if consistent { &kept[..n] } else { &cp.state.dataset.records[..] };
        for r in source {
            write_trace_line(r, &mut w)?;
        }
        w.flush()?;
    }
    if let Some(result) = cp.state.result() {
        let summary = Summary::new(&cp.config, &result);
        fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
        return Ok(RunStatus::Finished(summary));
    }
    drive(&cp.config, cp.state, &dir, opts)
}

/// Prints `N*` and writes `theta,e_data,e_model` for a measured curve.
pub fn fit_rtd_file(input: &Path, method: FitMethod, n_max: f64, output: &Path) -> Result<String> {
    let curve = RtdCurve::read_csv_path(input).map_err(at(input))?;
    let d = to_dimensionless(&curve)?;
    let fit = fit_tanks_in_series_with(&d, method, n_max)?;
    let model = tanks_in_series_curve(&d.theta, fit.n)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(output).map_err(|e| at(output)(e.into()))?));
    w.write_record(["theta", "e_data", "e_model"])?;
    for ((t, e), m) in d.theta.iter().zip(&d.e_theta).zip(&model) {
        w.write_record([format!("{t}"), format!("{e}"), format!("{m}")])?;
    }
    w.flush()?;
    Ok(format!(
        "N* = {:.6}\nmethod = {}\npeak discrepancy = {:.6e}\ndata peak = {:.6}\nmodel peak = {:.6}\npinned = {}\nmean residence time = {:.6} s\nfitted curve = {}\n",
        fit.n,
        serde_json::to_value(fit.method)?.as_str().unwrap_or_default(),
        fit.peak_discrepancy,
        fit.data_peak,
        fit.model_peak,
        fit.pinned,
        d.mean_time,
        output.display()
    ))
}

#[derive(Parser, Debug)]
#[command(name = "mfbo", version, about = "Multi-fidelity Bayesian optimization campaigns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a campaign from a JSON config.
    Run {
        config: PathBuf,
        /// Campaign directory; defaults to the config's output_dir.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Concurrent evaluations during the design of experiments.
        #[arg(long)]
        doe_threads: Option<usize>,
        /// Pause once the trace holds this many records.
        #[arg(long)]
        stop_after: Option<usize>,
        /// Overwrite an existing campaign directory.
        #[arg(long)]
        force: bool,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Continue a campaign from its checkpoint.
    Resume {
        checkpoint: PathBuf,
        #[arg(long)]
        doe_threads: Option<usize>,
        #[arg(long)]
        stop_after: Option<usize>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Write plot-ready CSV from a trace.
    PlotData {
        trace: PathBuf,
        /// progress, fidelity-map, budget-tracking or rtd.
        figure: String,
        /// Output file, `-` for stdout; defaults to <figure>.csv beside the trace.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fidelity grid size for fidelity-map.
        #[arg(long, default_value_t = 1.0)]
        cell: f64,
    },
    /// Fit the tanks-in-series model to a two-column RTD CSV.
    FitRtd {
        csv: PathBuf,
        /// peak-matching or least-squares.
        #[arg(long, default_value = "peak-matching")]
        method: String,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: f64,
        /// Fitted-curve CSV; defaults to <input>.fit.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a coil center line.
    Geometry(GeometryArgs),
    /// Check a config and print its diagnostics.
    Validate {
        config: Option<PathBuf>,
        /// Print the default config instead.
        #[arg(long)]
        print_default: bool,
    },
}

#[derive(Args, Debug)]
pub struct GeometryArgs {
    /// JSON file with pitch, coil_radius, inversion and optional tube fields.
    #[arg(long, conflicts_with_all = ["pitch", "coil_radius", "inversion"])]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub pitch: Option<f64>,
    #[arg(long)]
    pub coil_radius: Option<f64>,
    #[arg(long)]
    pub inversion: Option<f64>,
    /// csv, json or polyline-obj.
    #[arg(long, default_value = "csv")]
    pub format: String,
    #[arg(long, default_value_t = 10.0)]
    pub samples_per_mm: f64,
    /// Output file, `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

fn writer_for(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(io::stdout().lock()))
    } else {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        Ok(Box::new(BufWriter::new(File::create(path)?)))
    }
}

fn report(status: RunStatus) -> Result<i32> {
    match status {
        RunStatus::Paused(n) => {
            say!("paused after {n} records");
            Ok(exit::OK)
        }
        RunStatus::Finished(s) => {
            say!("{}", serde_json::to_string_pretty(&s)?);
            Ok(if s.termination_reason == Termination::EvaluatorFailureLimit.as_str() {
                exit::FAILURE
            } else {
                exit::OK
            })
        }
    }
}

fn geometry(args: GeometryArgs) -> Result<i32> {
    let params = match &args.params {
        Some(p) => serde_json::from_str::<CoilParams>(&fs::read_to_string(p).map_err(|e| at(p)(e.into()))?)?,
        None => match (args.pitch, args.coil_radius, args.inversion) {
            (Some(p), Some(r), Some(d)) => CoilParams::new(p, r, d),
            _ => return Err(Error::Config("give --params or all of --pitch, --coil-radius, --inversion".into())),
        },
    };
    params.validate().map_err(|e| Error::Config(e.to_string()))?;
    let format: ExportFormat = args.format.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    if !(args.samples_per_mm.is_finite() && args.samples_per_mm > 0.0) {
        return Err(Error::Config("samples-per-mm must be positive".into()));
    }
    let path = coil_path(&params, args.samples_per_mm)?;
    let mut w = writer_for(&args.out)?;
    export_path(&path, &params, format, &mut w)?;
    w.flush()?;
    Ok(exit::OK)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run {
            config,
            output,
            doe_threads,
            stop_after,
            force,
            quiet,
        } => {
            let config = CampaignConfig::load(&config).map_err(at(&config))?;
            let dir = output_dir(&config, output.as_deref());
            if dir.join(CHECKPOINT_FILE).exists() && !force {
                return Err(Error::Config(format!(
                    "{} already holds a campaign; use resume or --force",
                    dir.display()
                )));
            }
            let opts = RunOptions {
                doe_threads,
                stop_after,
                quiet,
            };
            report(start(&config, &dir, &opts)?)
        }
        Command::Resume {
            checkpoint,
            doe_threads,
            stop_after,
            quiet,
        } => {
            let opts = RunOptions {
                doe_threads,
                stop_after,
                quiet,
            };
            report(resume(&checkpoint, &opts)?)
        }
        Command::PlotData { trace, figure, out, cell } => {
            let figure: Figure = figure.parse()?;
            let records = read_trace_path(&trace).map_err(at(&trace))?;
            let out = out.unwrap_or_else(|| trace.with_file_name(format!("{}.csv", figure.as_str())));
            let mut w = writer_for(&out)?;
            write_figure(&records, figure, cell, &mut w)?;
            w.flush()?;
            if out.as_os_str() != "-" {
                say!("{}", out.display());
            }
            Ok(exit::OK)
        }
        Command::FitRtd { csv, method, n_max, out } => {
            let method: FitMethod = method.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
            let out = out.unwrap_or_else(|| csv.with_extension("fit.csv"));
            let text = fit_rtd_file(&csv, method, n_max, &out)?;
            let _ = io::stdout().lock().write_all(text.as_bytes());
            Ok(exit::OK)
        }
        Command::Geometry(args) => geometry(args),
        Command::Validate { config, print_default } => {
            if print_default {
                say!("{}", CampaignConfig::default().to_json());
                return Ok(exit::OK);
            }
            let Some(path) = config else {
                return Err(Error::Config("give a config path or --print-default".into()));
            };
            let text = fs::read_to_string(&path).map_err(|e| at(&path)(e.into()))?;
            let config: CampaignConfig = serde_json::from_str(&text)?;
            let diagnostics = config.diagnostics();
            if diagnostics.is_empty() {
                say!(
                    "ok: {} design and {} fidelity variables, {} evaluator, budget {} {}",
                    config.design.len(),
                    config.fidelity.len(),
                    config.evaluator.kind(),
                    config.budget_total,
                    config.budget_units
                );
                Ok(exit::OK)
            } else {
                for d in &diagnostics {
                    eprintln!("{}: {d}", path.display());
                }
                Ok(exit::INPUT)
            }
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::INPUT } else { exit::OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
