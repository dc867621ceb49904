//! Command implementations behind the `gmmlor` binary.
//!
//! Each `cmd_*` function returns the process exit code so the commands can be
//! driven from tests without spawning processes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use gmmlor_core::estimate::{fit, FitConfig, FitOutcome, StopReason};
use gmmlor_core::io::{
    check_version, format_f64, read_lors_file, read_model, to_json, write_lors_file, write_model, write_raster,
    write_text, write_trace, Manifest, RasterGrid, FORMAT_VERSION, RASTER_SIZE,
};
use gmmlor_core::metrics::{evaluate, ComponentErrors, FitReport};
use gmmlor_core::rng::derive_seed;
use gmmlor_core::simulate::{generate, EventCounts, SimulationConfig};
use gmmlor_core::{Error as CoreError, MixtureModel2D};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_MAX_ITERATIONS: i32 = 5;
pub const EXIT_COLLAPSE: i32 = 6;

/// Fraction of replicates that must succeed for a zero exit.
pub const MIN_SUCCESS_FRACTION: f64 = 0.95;

pub const RNG_DESCRIPTION: &str = "ChaCha20 (rand_chacha 0.9), key from SplitMix64(seed), stream 0 simulation / 1 shuffle / 2 initialization";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: CoreError },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input { source, .. } if source.is_numeric() => code_for(source),
            CliError::Input { .. } => EXIT_INPUT,
            CliError::Core(e) => code_for(e),
        }
    }
}

fn code_for(e: &CoreError) -> i32 {
    match e {
        CoreError::ComponentCollapsed { .. } => EXIT_COLLAPSE,
        e if e.is_numeric() => EXIT_NUMERIC,
        CoreError::InvalidConfig(_) | CoreError::SizeMismatch(..) => EXIT_USAGE,
        _ => EXIT_INPUT,
    }
}

fn input<T>(path: &Path, r: gmmlor_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = input(path, fs::read_to_string(path).map_err(CoreError::from))?;
    input(path, serde_json::from_str(&text).map_err(CoreError::from))
}

#[derive(Debug, Parser)]
#[command(name = "gmmlor", version, about = "Gaussian mixture reconstruction from 2D lines of response")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate lines of response from a truth model
    Generate(GenerateArgs),
    /// Fit a K-component mixture to a LoR file
    Fit(FitArgs),
    /// Compare a fitted model against the truth
    Evaluate(EvaluateArgs),
    /// Run a seeded generate/fit/evaluate study
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args, Default)]
pub struct GenerateArgs {
    /// Truth model JSON
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Events per component, comma separated
    #[arg(long, value_delimiter = ',', conflicts_with = "n")]
    pub counts: Option<Vec<u64>>,
    /// Total events, split by the truth weights
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output LoR CSV; the manifest goes next to it
    #[arg(long)]
    pub out: PathBuf,
    /// Include the generating component of every event
    #[arg(long)]
    pub labels: bool,
    /// Shuffle event order (seeded)
    #[arg(long)]
    pub shuffle: bool,
    /// Simulation config JSON; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Simulation config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationFile {
    pub truth: Option<PathBuf>,
    pub counts: Option<Vec<u64>>,
    pub n: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shuffle: bool,
    #[serde(default)]
    pub labels: bool,
}

fn event_counts(counts: Option<Vec<u64>>, n: Option<u64>) -> Result<EventCounts, CliError> {
    match (counts, n) {
        (Some(c), None) => Ok(EventCounts::PerComponent(c)),
        (None, Some(n)) => Ok(EventCounts::Total(n)),
        (None, None) => Err(CliError::Usage("one of --counts or --n is required".into())),
        (Some(_), Some(_)) => Err(CliError::Usage("--counts and --n are exclusive".into())),
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<i32, CliError> {
    let file = match &args.config {
        Some(p) => read_json::<SimulationFile>(p)?,
        None => SimulationFile::default(),
    };
    let model_path = args
        .model
        .clone()
        .or(file.truth)
        .ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let (counts, n) = if args.counts.is_some() || args.n.is_some() {
        (args.counts.clone(), args.n)
    } else {
        (file.counts, file.n)
    };
    let truth = input(&model_path, read_model(&model_path))?;
    let mut config = SimulationConfig::new(truth, event_counts(counts, n)?, args.seed.unwrap_or(file.seed));
    config.shuffle = args.shuffle || file.shuffle;
    let labels = args.labels || file.labels;
    let resolved = config.resolved_counts()?;
    let data = generate(&config)?;
    info!("generated {} events with seed {}", data.len(), config.seed);
    write_lors_file(&args.out, &data.lors, if labels { data.truth_labels.as_deref() } else { None })?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION.to_string(),
        seed: config.seed,
        counts: resolved,
        truth: model_path.display().to_string(),
        shuffled: config.shuffle,
        labels,
        rng: RNG_DESCRIPTION.to_string(),
    };
    write_text(&manifest_path(&args.out), &(to_json(&manifest)? + "\n"))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    /// LoR CSV
    #[arg(long)]
    pub lors: PathBuf,
    /// Number of components
    #[arg(long)]
    pub k: Option<usize>,
    /// Fit config JSON; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Output model JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Iteration trace (JSON lines); defaults next to the model
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

/// Loads a fit config and applies flag overrides.
pub fn resolve_fit_config(
    config: Option<&Path>,
    k: Option<usize>,
    seed: Option<u64>,
    restarts: Option<usize>,
) -> Result<FitConfig, CliError> {
    let mut cfg = match config {
        Some(p) => read_json::<FitConfig>(p)?,
        None => FitConfig::new(k.ok_or_else(|| CliError::Usage("--k or --config is required".into()))?),
    };
    if let Some(k) = k {
        cfg.k = k;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = restarts {
        cfg.restarts = r;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn trace_path(out: &Path) -> PathBuf {
    out.with_extension("trace.jsonl")
}

pub fn cmd_fit(args: &FitArgs) -> Result<i32, CliError> {
    let cfg = resolve_fit_config(args.config.as_deref(), args.k, args.seed, args.restarts)?;
    let data = input(&args.lors, read_lors_file(&args.lors))?;
    info!("fitting {} components to {} events", cfg.k, data.len());
    let outcome = fit(&data.lors, &cfg)?;
    write_model(&args.out, &outcome.model)?;
    let trace = args.trace.clone().unwrap_or_else(|| trace_path(&args.out));
    write_trace(std::io::BufWriter::new(fs::File::create(trace).map_err(CoreError::from)?), &outcome.trace)?;
    Ok(match outcome.stop {
        StopReason::Converged => EXIT_OK,
        StopReason::MaxIterations => {
            warn!("stopped at the iteration limit; model written anyway");
            EXIT_MAX_ITERATIONS
        }
    })
}

#[derive(Debug, Args, Default)]
pub struct EvaluateArgs {
    /// Fitted model JSON
    #[arg(long)]
    pub model: PathBuf,
    /// Truth model JSON
    #[arg(long)]
    pub truth: PathBuf,
    /// Output report JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for truth and estimate density rasters
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    /// Raster cells per axis
    #[arg(long, default_value_t = RASTER_SIZE)]
    pub grid: usize,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a FitReport,
    format_version: &'a str,
}

pub const TRUTH_RASTER: &str = "truth_density.csv";
pub const ESTIMATE_RASTER: &str = "estimate_density.csv";

/// Writes matching density rasters of both models into `dir`.
pub fn write_rasters(dir: &Path, estimate: &MixtureModel2D, truth: &MixtureModel2D, size: usize) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CoreError::from)?;
    let grid = RasterGrid::covering(&[estimate, truth], size);
    for (name, model) in [(TRUTH_RASTER, truth), (ESTIMATE_RASTER, estimate)] {
        write_raster(fs::File::create(dir.join(name)).map_err(CoreError::from)?, model, &grid)?;
    }
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32, CliError> {
    let estimate = input(&args.model, read_model(&args.model))?;
    let truth = input(&args.truth, read_model(&args.truth))?;
    if estimate.len() != truth.len() {
        return Err(CliError::Usage(format!(
            "model has {} components, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    let report = evaluate(&estimate, &truth)?;
    let file = ReportFile {
        report: &report,
        format_version: FORMAT_VERSION,
    };
    write_text(&args.out, &(to_json(&file)? + "\n"))?;
    if let Some(dir) = &args.plot_data {
        write_rasters(dir, &estimate, &truth, args.grid)?;
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Args, Default)]
pub struct ReplicateArgs {
    /// Truth model JSON
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', conflicts_with = "n")]
    pub counts: Option<Vec<u64>>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fit config JSON (K defaults to the truth size)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also write density rasters per replicate
    #[arg(long)]
    pub plot_data: bool,
    /// Experiment spec JSON; flags override its fields
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

/// Full description of a replicate study.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub truth: Option<PathBuf>,
    pub counts: Option<Vec<u64>>,
    pub n: Option<u64>,
    pub fit: Option<FitConfig>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub plot_data: bool,
}

/// Outcome of one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub seed: u64,
    pub result: Result<(FitReport, bool), String>,
}

fn run_replicate(
    index: usize,
    seed: u64,
    truth: &MixtureModel2D,
    counts: &EventCounts,
    base: &FitConfig,
    out: &Path,
    plot_data: bool,
) -> ReplicateRow {
    let attempt = || -> Result<(FitReport, bool), CliError> {
        let data = generate(&SimulationConfig::new(truth.clone(), counts.clone(), seed))?;
        let cfg = FitConfig { seed, ..base.clone() };
        let outcome: FitOutcome = fit(&data.lors, &cfg)?;
        write_model(&out.join("models").join(format!("replicate_{index:04}.json")), &outcome.model)?;
        if plot_data {
            write_rasters(&out.join("plots").join(format!("replicate_{index:04}")), &outcome.model, truth, RASTER_SIZE)?;
        }
        let report = evaluate(&outcome.model, truth)?;
        Ok((report, outcome.stop == StopReason::Converged))
    };
    let result = attempt().map_err(|e| e.to_string());
    match &result {
        Ok((r, _)) => info!("replicate {index}: KL {:.5}", r.kl_divergence),
        Err(e) => warn!("replicate {index} failed: {e}"),
    }
    ReplicateRow {
        replicate: index,
        seed,
        result,
    }
}

pub fn study_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = ["replicate", "seed", "status", "converged"].map(String::from).to_vec();
    for name in ["mean_err", "cov_err", "weight_err"] {
        h.extend((1..=k).map(|j| format!("{name}_{j}")));
    }
    h.push("kl".into());
    h.push("error".into());
    h
}

fn study_record(row: &ReplicateRow, k: usize) -> Vec<String> {
    let mut rec = vec![row.replicate.to_string(), row.seed.to_string()];
    match &row.result {
        Ok((report, converged)) => {
            rec.push("ok".into());
            rec.push(converged.to_string());
            let pick: [fn(&ComponentErrors) -> f64; 3] = [|e| e.mean_error, |e| e.cov_error, |e| e.weight_error];
            for f in pick {
                rec.extend(report.components.iter().map(|e| format_f64(f(e))));
            }
            rec.push(format_f64(report.kl_divergence));
            rec.push(String::new());
        }
        Err(msg) => {
            rec.push("failed".into());
            rec.push("false".into());
            rec.extend(std::iter::repeat_n(String::new(), 3 * k + 1));
            rec.push(msg.clone());
        }
    }
    rec
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub format_version: String,
    pub master_seed: u64,
    pub replicates: usize,
    pub succeeded: usize,
    pub converged: usize,
    /// Average errors per truth component over successful replicates.
    pub average_errors: Vec<ComponentErrors>,
    pub kl_mean: Option<f64>,
    pub kl_max: Option<f64>,
}

pub fn summarize(rows: &[ReplicateRow], k: usize, master_seed: u64) -> StudySummary {
    let ok: Vec<&(FitReport, bool)> = rows.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let n = ok.len() as f64;
    let average_errors = (0..k)
        .map(|j| {
            let avg = |f: fn(&ComponentErrors) -> f64| ok.iter().map(|(r, _)| f(&r.components[j])).sum::<f64>() / n;
            ComponentErrors {
                mean_error: avg(|e| e.mean_error),
                cov_error: avg(|e| e.cov_error),
                weight_error: avg(|e| e.weight_error),
            }
        })
        .collect();
    let kls: Vec<f64> = ok.iter().map(|(r, _)| r.kl_divergence).collect();
    StudySummary {
        format_version: FORMAT_VERSION.to_string(),
        master_seed,
        replicates: rows.len(),
        succeeded: ok.len(),
        converged: ok.iter().filter(|(_, c)| *c).count(),
        average_errors,
        kl_mean: (!kls.is_empty()).then(|| kls.iter().sum::<f64>() / n),
        kl_max: kls.iter().copied().reduce(f64::max),
    }
}

pub const STUDY_CSV: &str = "study.csv";
pub const SUMMARY_JSON: &str = "summary.json";

pub fn cmd_replicate(args: &ReplicateArgs) -> Result<i32, CliError> {
    let spec = match &args.spec {
        Some(p) => read_json::<ExperimentSpec>(p)?,
        None => ExperimentSpec::default(),
    };
    let truth_path = args
        .model
        .clone()
        .or(spec.truth)
        .ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let out = args
        .out
        .clone()
        .or(spec.out)
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let replicates = args.replicates.or(spec.replicates).unwrap_or(1);
    if replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let master_seed = args.seed.or(spec.seed).unwrap_or(0);
    let (counts, n) = if args.counts.is_some() || args.n.is_some() {
        (args.counts.clone(), args.n)
    } else {
        (spec.counts, spec.n)
    };
    let counts = event_counts(counts, n)?;
    let truth = input(&truth_path, read_model(&truth_path))?;
    let k = truth.len();
    let mut base = match (&args.config, spec.fit) {
        (Some(p), _) => resolve_fit_config(Some(p), None, None, None)?,
        (None, Some(f)) => f,
        (None, None) => FitConfig::new(k),
    };
    if let Some(r) = args.restarts {
        base.restarts = r;
    }
    base.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if base.k != k {
        return Err(CliError::Usage(format!("fit K = {} but truth has {k} components", base.k)));
    }
    SimulationConfig::new(truth.clone(), counts.clone(), 0).resolved_counts()?;
    let plot_data = args.plot_data || spec.plot_data;

    fs::create_dir_all(out.join("models")).map_err(CoreError::from)?;
    let jobs = args.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let rows: Vec<ReplicateRow> = pool.install(|| {
        (0..replicates)
            .into_par_iter()
            .map(|i| run_replicate(i, derive_seed(master_seed, i as u64), &truth, &counts, &base, &out, plot_data))
            .collect()
    });

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out.join(STUDY_CSV))
        .map_err(|e| CoreError::Parse(e.to_string()))?;
    let csv_err = |e: csv::Error| CliError::Core(CoreError::Parse(e.to_string()));
    w.write_record(study_header(k)).map_err(csv_err)?;
    for row in &rows {
        w.write_record(study_record(row, k)).map_err(csv_err)?;
    }
    w.flush().map_err(CoreError::from)?;

    let summary = summarize(&rows, k, master_seed);
    write_text(&out.join(SUMMARY_JSON), &(to_json(&summary)? + "\n"))?;
    info!("{}/{} replicates succeeded", summary.succeeded, summary.replicates);
    let fraction = summary.succeeded as f64 / summary.replicates as f64;
    Ok(if fraction >= MIN_SUCCESS_FRACTION { EXIT_OK } else { EXIT_NUMERIC })
}

/// Reads and version-checks a manifest.
pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let m: Manifest = read_json(path)?;
    input(path, check_version(&m.format_version))?;
    Ok(m)
}

/// Dispatches a parsed command line and reports errors on stderr.
pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Replicate(a) => cmd_replicate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("gmmlor: {e}");
            e.exit_code()
        }
    }
}
