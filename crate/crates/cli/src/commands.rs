//! Batch subcommands. Each takes its parsed arguments and returns the JSON
//! document it wrote, so tests can drive them without a subprocess.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use layerbench::dataset::{load_manifest, DatasetStats, DEFAULT_OCCLUSION_THRESHOLD};
use layerbench::elo::{read_ledger, simulate_study, write_ledger, DEFAULT_K_FACTOR};
use layerbench::embedder::{Embedder, HttpEmbedder, HttpOptions, ReferenceEmbedder};
use layerbench::eval::{canonical_json, evaluate_model, EvalConfig, EvaluationReport};
use layerbench::hpa::{compute_bounds, correlation_report, MetricBounds, Subset};
use layerbench::synth::{generate, graded_models, write_dataset, write_predictions, SynthConfig};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print a human-readable table to stdout.
    #[arg(long)]
    pub pretty: bool,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    fs::write(path, text).map_err(CliError::io(path))
}

/// Writes canonical JSON to `--out` (or stdout) and the table on `--pretty`.
fn emit<T: Serialize>(value: &T, table: impl FnOnce() -> String, out: &OutputArgs) -> Result<String, CliError> {
    let json = canonical_json(value, true);
    match &out.out {
        Some(path) => write_text(path, &json)?,
        None if !out.pretty => print!("{json}"),
        None => {}
    }
    if out.pretty {
        print!("{}", table());
    }
    Ok(json)
}

pub fn open_embedder(spec: &str) -> Result<Box<dyn Embedder>, CliError> {
    if spec == "reference" {
        Ok(Box::new(ReferenceEmbedder::new()))
    } else if spec.starts_with("http://") || spec.starts_with("https://") {
        Ok(Box::new(HttpEmbedder::connect(spec, HttpOptions::default())?))
    } else {
        Err(CliError::InvalidArgument(format!(
            "--embedder must be `reference` or an http(s) URL, got `{spec}`"
        )))
    }
}

fn list_models(pred_root: &Path) -> Result<Vec<String>, CliError> {
    let mut models: Vec<String> = fs::read_dir(pred_root)
        .map_err(CliError::io(pred_root))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    models.sort();
    Ok(models)
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub pred_root: PathBuf,
    /// Comma-separated model ids; defaults to every directory in --pred-root.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// `reference` or the URL of an embedding service.
    #[arg(long, env = "LAYERBENCH_EMBEDDER_URL", default_value = "reference")]
    pub embedder: String,
    /// Normalisation bounds to read, or to write with --compute-bounds.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    /// Derive bounds from the evaluated models (needs at least two).
    #[arg(long)]
    pub compute_bounds: bool,
    #[arg(long, default_value = "all")]
    pub subset: Subset,
    #[arg(long)]
    pub allow_missing: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<String, CliError> {
    let given = match (&args.bounds, args.compute_bounds) {
        (_, true) => None,
        (Some(path), false) => Some(MetricBounds::from_json(&read_text(path)?)?),
        (None, false) => return Err(CliError::BoundsRequired),
    };
    let dataset = load_manifest(&args.manifest)?;
    let embedder = open_embedder(&args.embedder)?;
    let models = if args.models.is_empty() {
        list_models(&args.pred_root)?
    } else {
        args.models.clone()
    };
    let config = EvalConfig {
        subset: args.subset,
        allow_missing: args.allow_missing,
        ..Default::default()
    };
    let mut evaluations = Vec::with_capacity(models.len());
    for m in &models {
        log::info!("evaluating {m}");
        evaluations.push(evaluate_model(&dataset, &args.pred_root, m, embedder.as_ref(), &config)?);
    }
    let report = EvaluationReport::assemble(&embedder.spec().name, args.subset, evaluations, given)?;
    if args.compute_bounds {
        if let Some(path) = &args.bounds {
            write_text(path, &canonical_json(&report.bounds, true))?;
        }
    }
    emit(&report, || evaluation_table(&report), &args.output)
}

fn evaluation_table(report: &EvaluationReport) -> String {
    let mut t = format!(
        "{:<16} {:>10} {:>10} {:>12} {:>8} {:>6} {:>8}\n",
        "model", "S_vis", "S_gen", "S_fid", "HPA", "n", "skipped"
    );
    for s in report.scores() {
        t.push_str(&format!(
            "{:<16} {:>10.5} {:>10.5} {:>12.6} {:>8.4} {:>6} {:>8}\n",
            s.model_id, s.s_vis, s.s_gen, s.s_fid, s.hpa, s.n_samples, s.n_skipped_gen
        ));
    }
    t
}

fn read_report(path: &Path) -> Result<EvaluationReport, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Args)]
pub struct CorrelateArgs {
    /// Report written by `evaluate`.
    #[arg(long)]
    pub report: PathBuf,
    /// Elo ledger (newline-delimited JSON).
    #[arg(long)]
    pub ledger: PathBuf,
    /// Scatter CSV; defaults to --out with a `.csv` extension.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn correlate(args: &CorrelateArgs) -> Result<String, CliError> {
    let report = read_report(&args.report)?;
    let ledger = read_ledger(&args.ledger)?;
    let hpa: BTreeMap<String, f64> = report.scores().map(|s| (s.model_id.clone(), s.hpa)).collect();
    let corr = correlation_report(&hpa, ledger.ratings())?;
    let csv_path = args.csv.clone().or_else(|| args.output.out.as_ref().map(|o| o.with_extension("csv")));
    if let Some(path) = csv_path {
        write_text(&path, &corr.to_csv())?;
    }
    emit(
        &corr,
        || {
            let mut t = format!("pearson  {:.4}\nspearman {:.4}\n", corr.pearson, corr.spearman);
            for p in &corr.scatter {
                t.push_str(&format!("{:<16} hpa {:.4}  elo {:.1}\n", p.model_id, p.hpa, p.elo));
            }
            t
        },
        &args.output,
    )
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Number of area-ratio histogram bins.
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Hidden share above which a layer counts as occluded.
    #[arg(long, default_value_t = DEFAULT_OCCLUSION_THRESHOLD)]
    pub occlusion_threshold: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn stats(args: &StatsArgs) -> Result<String, CliError> {
    if args.bins == 0 {
        return Err(CliError::InvalidArgument("--bins must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&args.occlusion_threshold) {
        return Err(CliError::InvalidArgument("--occlusion-threshold must lie in [0, 1)".into()));
    }
    let dataset = load_manifest(&args.manifest)?;
    let stats = DatasetStats::compute(&dataset, args.bins, args.occlusion_threshold);
    emit(
        &stats,
        || {
            let mut t = format!(
                "samples {}  foreground {}  background {}  mean instances {:.2}\n",
                stats.samples, stats.foreground_layers, stats.background_layers, stats.mean_instances
            );
            for (k, v) in &stats.instance_distribution {
                t.push_str(&format!("  {k} instances: {v} images\n"));
            }
            if let Some(o) = &stats.occlusion {
                t.push_str(&format!("occlusion rate {:.1}%\n", 100.0 * o.rate));
            }
            t.push_str(&format!("quality pass (fg / bg) {}\n", stats.quality.summary()));
            t
        },
        &args.output,
    )
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    /// One or more `evaluate` reports forming the model pool.
    #[arg(long, required = true, num_args = 1..)]
    pub report: Vec<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn bounds(args: &BoundsArgs) -> Result<String, CliError> {
    let mut pool = Vec::new();
    for path in &args.report {
        pool.extend(read_report(path)?.scores().map(|s| s.raw()));
    }
    let b = compute_bounds(&pool)?;
    emit(
        &b,
        || {
            let m = &b.metrics;
            format!(
                "s_vis [{}, {}]\ns_gen [{}, {}]\ns_fid [{}, {}]\n",
                m.s_vis.min, m.s_vis.max, m.s_gen.min, m.s_gen.max, m.s_fid.min, m.s_fid.max
            )
        },
        &args.output,
    )
}

#[derive(Debug, Clone, Args)]
pub struct EloSimulateArgs {
    /// JSON object mapping model id to true skill.
    #[arg(long)]
    pub skills: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_K_FACTOR)]
    pub k_factor: f64,
    /// Ledger file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub pretty: bool,
}

pub fn elo_simulate(args: &EloSimulateArgs) -> Result<String, CliError> {
    let skills: BTreeMap<String, f64> = serde_json::from_str(&read_text(&args.skills)?).map_err(|source| CliError::Json {
        path: args.skills.clone(),
        source,
    })?;
    if args.out.exists() {
        return Err(CliError::InvalidArgument(format!(
            "{} already exists; refusing to overwrite a ledger",
            args.out.display()
        )));
    }
    let ledger = simulate_study(&skills, args.rounds, args.k_factor, args.seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    write_ledger(&args.out, &ledger)?;
    let board = ledger.leaderboard();
    let out = OutputArgs {
        out: None,
        pretty: args.pretty,
    };
    emit(
        &board,
        || {
            board
                .iter()
                .map(|r| format!("{:<16} {:>8.1} {:>6}\n", r.model_id, r.rating, r.matches))
                .collect()
        },
        &out,
    )
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Dataset directory to create (must not exist).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 96)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write nine graded model outputs here.
    #[arg(long)]
    pub pred_root: Option<PathBuf>,
    /// Candidates per layer in the prediction directories.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Write true skills of the graded models (best first) here.
    #[arg(long)]
    pub skills_out: Option<PathBuf>,
}

/// Skill ladder for the graded models: 1800 for the clean copy, 75 less per
/// step of corruption.
pub fn graded_skills() -> BTreeMap<String, f64> {
    graded_models()
        .into_iter()
        .enumerate()
        .map(|(i, (id, _))| (id, 1800.0 - 75.0 * i as f64))
        .collect()
}

pub fn synth(args: &SynthArgs) -> Result<String, CliError> {
    if args.k == 0 || args.samples == 0 || args.size < 8 {
        return Err(CliError::InvalidArgument("need --samples ≥ 1, --size ≥ 8 and --k ≥ 1".into()));
    }
    let scenes = generate(&SynthConfig {
        samples: args.samples,
        height: args.size,
        width: args.size,
        seed: args.seed,
        ..Default::default()
    });
    let manifest = write_dataset(&scenes, &args.out)?;
    if let Some(root) = &args.pred_root {
        write_predictions(&scenes, root, &graded_models(), args.k, args.seed)?;
    }
    if let Some(path) = &args.skills_out {
        write_text(path, &canonical_json(&graded_skills(), true))?;
    }
    let summary = serde_json::json!({
        "manifest": args.out.join("manifest.json"),
        "samples": manifest.samples.len(),
        "layers": manifest.samples.iter().map(|s| s.layers.len()).sum::<usize>(),
        "models": args.pred_root.as_ref().map(|_| graded_models().into_iter().map(|(m, _)| m).collect::<Vec<_>>()),
    });
    Ok(canonical_json(&summary, true))
}
