//! Command-line front end. `potts <gen|cluster|segment|report>`.
//!
//! Results go to files written atomically; stdout carries one JSON object
//! per line and diagnostics go to stderr. Exit codes: 0 success, 1 usage or
//! config, 2 I/O or parse, 3 numeric failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::clustering::{load_dataset, run_trials, CircleSelection, ClusterPipeline, ThreeCircles};
use crate::config::{preset, RunConfig};
use crate::error::{PottsError, Result};
use crate::imaging::{load_image, save_label_map, save_phi_pgm, segment_image};
use crate::io::{write_atomic, write_bytes_atomic, write_labels_csv, write_matrix_csv};
use crate::region::ForceKind;
use crate::solver::{Algorithm, TvFlavor};

#[derive(Debug, Parser)]
#[command(
    name = "potts",
    version,
    about = "Convex-relaxed Potts segmentation and graph clustering"
)]
struct Cli {
    /// Worker threads; 1 runs everything sequentially and deterministically.
    /// Falls back to POTTS_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        #[command(subcommand)]
        dataset: GenDataset,
    },
    /// Semi-supervised clustering trials on a labelled dataset.
    Cluster(ClusterArgs),
    /// Multi-phase segmentation of an image.
    Segment(SegmentArgs),
    /// Collect run JSONs into one CSV table.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum GenDataset {
    /// Three concentric noisy circles in R^100.
    ThreeCircles(GenArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Output directory; receives points.csv and labels.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.16)]
    noise_variance: f64,
    #[arg(long, default_value_t = 6000)]
    n_points: usize,
    /// Pick circles in proportion to their circumference.
    #[arg(long)]
    arc_length: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Pdhg,
    Admm,
}

impl From<SolverArg> for Algorithm {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Pdhg => Algorithm::Pdhg,
            SolverArg::Admm => Algorithm::Admm,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ForceArg {
    Log,
    Linear,
    L2,
}

impl From<ForceArg> for ForceKind {
    fn from(f: ForceArg) -> Self {
        match f {
            ForceArg::Log => ForceKind::Log,
            ForceArg::Linear => ForceKind::Linear,
            ForceArg::L2 => ForceKind::L2,
        }
    }
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Points CSV (overrides `data` in the config).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Labels CSV (overrides `labels` in the config).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Config file, or `preset:NAME` for a shipped preset.
    #[arg(long)]
    config: Option<String>,
    /// Aggregate JSON; per-trial JSONs are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long, value_enum)]
    force: Option<ForceArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_seeds: Option<usize>,
    #[arg(long)]
    n_trials: Option<usize>,
    /// Base seed; trial i samples seeds with seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write each trial's labels as CSV.
    #[arg(long)]
    dump_labels: bool,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    image: Option<PathBuf>,
    /// Number of phases (at least 2).
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    k: Option<u64>,
    #[arg(long, value_enum)]
    force: Option<ForceArg>,
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    out_labels: PathBuf,
    #[arg(long)]
    out_report: PathBuf,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// k-means seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write each phase of the relaxed labeling as `PREFIX_k.pgm`.
    #[arg(long)]
    phi_prefix: Option<PathBuf>,
    /// Write `iter,E_P,E_D` energy history.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Glob of run JSON files.
    #[arg(long)]
    inputs: String,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let threads = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var("POTTS_THREADS") {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) => Some(n),
                Err(_) => {
                    let _ = writeln!(stderr, "error: POTTS_THREADS={v:?} is not a thread count");
                    return 1;
                }
            },
            Err(_) => None,
        },
    };
    if threads == Some(0) {
        let _ = writeln!(stderr, "error: thread count must be at least 1");
        return 1;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start thread pool: {e}");
            return 3;
        }
    };
    let deterministic = threads == Some(1);
    let mut notes = Vec::new();
    let result = pool.install(|| match cli.command {
        Command::Gen {
            dataset: GenDataset::ThreeCircles(args),
        } => cmd_gen(&args),
        Command::Cluster(args) => cmd_cluster(&args, deterministic, &mut notes),
        Command::Segment(args) => cmd_segment(&args, deterministic),
        Command::Report(args) => cmd_report(&args, &mut notes),
    });
    for note in notes {
        let _ = writeln!(stderr, "{note}");
    }
    match result
        .and_then(|line| writeln!(stdout, "{line}").map_err(|e| PottsError::io("<stdout>", e)))
    {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    write_bytes_atomic(path, text.as_bytes())
}

fn load_config(spec: Option<&str>) -> Result<RunConfig> {
    match spec {
        None => Ok(RunConfig::default()),
        Some(s) => match s.strip_prefix("preset:") {
            Some(name) => {
                let text = preset(name)
                    .ok_or_else(|| PottsError::Config(format!("unknown preset {name:?}")))?;
                RunConfig::parse(text, s)
            }
            None => RunConfig::load(Path::new(s)),
        },
    }
}

fn cmd_gen(args: &GenArgs) -> Result<Value> {
    let gen = ThreeCircles {
        n_points: args.n_points,
        noise_variance: args.noise_variance,
        selection: if args.arc_length {
            CircleSelection::ArcLength
        } else {
            CircleSelection::PerCircle
        },
        ..ThreeCircles::default()
    };
    let data = gen.generate(args.seed)?;
    std::fs::create_dir_all(&args.out).map_err(|e| PottsError::io(&args.out, e))?;
    let points = args.out.join("points.csv");
    let labels = args.out.join("labels.csv");
    write_matrix_csv(&points, data.points().view())?;
    if let Err(e) = write_labels_csv(&labels, data.labels()) {
        let _ = std::fs::remove_file(&points);
        return Err(e);
    }
    Ok(json!({
            "command": "gen",
            "dataset": "three-circles",
            "points": points,
            "labels": labels,
            "n_points": data.n_points(),
            "dim": data.points().ncols(),
            "n_classes": data.n_classes(),
            "seed": args.seed,
    }))
}

fn output_stem(path: &Path) -> PathBuf {
    match path.extension() {
        Some(ext) if ext == "json" => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn cmd_cluster(args: &ClusterArgs, deterministic: bool, notes: &mut Vec<String>) -> Result<Value> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(f) = args.force {
        config.force = Some(f.into());
    }
    if let Some(a) = args.alpha {
        config.set("alpha", &a.to_string())?;
        if config.force == Some(ForceKind::Linear) {
            config.alpha_linear = Some(a);
        }
    }
    if let Some(n) = args.n_seeds {
        config.set("n_seeds", &n.to_string())?;
    }
    if let Some(n) = args.n_trials {
        config.set("n_trials", &n.to_string())?;
    }
    if let Some(s) = args.seed {
        config.rng_seed = Some(s);
    }
    let params = config.cluster_params()?;
    let spec = config.trial_spec();
    let mut solver = config.solver_config(
        args.solver.map(Into::into),
        TvFlavor::AnisotropicGraph,
        1e-3,
    );
    solver.deterministic = deterministic;
    solver.validate()?;
    let data_path = args
        .data
        .clone()
        .or(config.data.clone())
        .ok_or_else(|| PottsError::Config("no dataset: pass --data or set `data`".into()))?;
    let labels_path = args
        .labels
        .clone()
        .or(config.labels.clone())
        .ok_or_else(|| PottsError::Config("no labels: pass --labels or set `labels`".into()))?;

    let dataset = load_dataset(&data_path, &labels_path)?;
    notes.push(format!(
        "clustering {} points, K={}, {} trials with {} seeds ({}, {} force)",
        dataset.n_points(),
        dataset.n_classes(),
        spec.n_trials,
        spec.n_seeds,
        solver.algorithm.name(),
        params.force.name()
    ));
    let pipeline = ClusterPipeline::new(&dataset, params.clone())?;
    let aggregate = run_trials(&pipeline, &spec, &solver)?;

    let stem = output_stem(&args.out);
    let run_id = stem
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut trial_files = Vec::new();
    for (i, trial) in aggregate.trials.iter().enumerate() {
        let mut value = trial.to_json();
        let row = json!({
            "run_id": format!("{run_id}_trial{i}"),
            "algorithm": solver.algorithm.name(),
            "force": params.force.name(),
            "accuracy": trial.accuracy,
            "iterations": trial.report.iterations,
            "gap": trial.report.final_gap,
            "wall_time_s": trial.report.wall_time_s,
            "trial": i,
            "seed": spec.base_seed + i as u64,
        });
        merge(&mut value, row);
        let mut name = stem.as_os_str().to_owned();
        name.push(format!("_trial{i}.json"));
        let path = PathBuf::from(name);
        write_json(&path, &value)?;
        if args.dump_labels {
            let mut name = stem.as_os_str().to_owned();
            name.push(format!("_trial{i}_labels.csv"));
            write_labels_csv(Path::new(&name), &trial.labels)?;
        }
        trial_files.push(path);
    }

    let max_gap = aggregate
        .trials
        .iter()
        .map(|t| t.report.final_gap)
        .fold(0.0, f64::max);
    let mut summary = aggregate.to_json();
    merge(
        &mut summary,
        json!({
            "run_id": run_id,
            "algorithm": solver.algorithm.name(),
            "force": params.force.name(),
            "accuracy": aggregate.mean_accuracy,
            "iterations": aggregate.mean_iterations,
            "gap": max_gap,
            "wall_time_s": aggregate.mean_wall_time_s,
            "params": serde_json::to_value(&params).expect("serializable"),
            "solver": serde_json::to_value(&solver).expect("serializable"),
            "trial_spec": serde_json::to_value(&spec).expect("serializable"),
            "trial_files": trial_files,
        }),
    );
    write_json(&args.out, &summary)?;
    let mut line = aggregate.to_json();
    merge(
        &mut line,
        json!({"command": "cluster", "out": args.out, "algorithm": solver.algorithm.name(), "force": params.force.name()}),
    );
    Ok(line)
}

fn merge(target: &mut Value, extra: Value) {
    if let (Value::Object(t), Value::Object(e)) = (target, extra) {
        t.extend(e);
    }
}

fn cmd_segment(args: &SegmentArgs, deterministic: bool) -> Result<Value> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(k) = args.k {
        config.set("k", &k.to_string())?;
    }
    if let Some(f) = args.force {
        config.force = Some(f.into());
    }
    if let Some(s) = args.seed {
        config.rng_seed = Some(s);
    }
    let k = config.k.ok_or_else(|| {
        PottsError::Config("number of phases missing: pass --k or set `k`".into())
    })?;
    let force = config.force_or(ForceKind::Log);
    let params = config.segment_params();
    let mut solver =
        config.solver_config(args.solver.map(Into::into), TvFlavor::IsotropicGrid, 1e-5);
    solver.deterministic = deterministic;
    solver.validate()?;
    let image_path = args
        .image
        .clone()
        .or(config.image.clone())
        .ok_or_else(|| PottsError::Config("no image: pass --image or set `image`".into()))?;

    let img = load_image(&image_path)?;
    let seg = segment_image(&img, k, force, &params, &solver)?;
    save_label_map(&seg.labels, k, img.geometry(), &args.out_labels)?;
    if let Some(prefix) = &args.phi_prefix {
        save_phi_pgm(seg.phi.view(), img.geometry(), prefix)?;
    }
    if let Some(path) = &args.history {
        seg.report.write_history_csv(path)?;
    }
    let run_id = output_stem(&args.out_report)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut report = seg.report.summary_json();
    merge(
        &mut report,
        json!({
            "run_id": run_id,
            "force": force.name(),
            "accuracy": Value::Null,
            "gap": seg.report.final_gap,
            "k": k,
            "width": img.width(),
            "height": img.height(),
            "centroids": seg.centroids.view().outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            "segment_params": serde_json::to_value(&params).expect("serializable"),
            "solver": serde_json::to_value(&solver).expect("serializable"),
            "labels": args.out_labels,
        }),
    );
    write_json(&args.out_report, &report)?;
    let mut line = seg.report.summary_json();
    merge(
        &mut line,
        json!({"command": "segment", "labels": args.out_labels, "report": args.out_report, "force": force.name(), "k": k}),
    );
    Ok(line)
}

const REPORT_COLUMNS: [&str; 7] = [
    "run_id",
    "algorithm",
    "force",
    "accuracy",
    "iterations",
    "gap",
    "wall_time_s",
];

fn csv_cell(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some(String::new()),
        Value::String(s) if !s.contains([',', '"', '\n']) => Some(s.clone()),
        Value::String(s) => Some(format!("\"{}\"", s.replace('"', "\"\""))),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn report_row(path: &Path) -> std::result::Result<Vec<String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("malformed JSON: {e}"))?;
    let mut row = Vec::with_capacity(REPORT_COLUMNS.len());
    for col in REPORT_COLUMNS {
        let cell = match (col, value.get(col)) {
            ("run_id", None) => path.file_stem().map(|s| s.to_string_lossy().into_owned()),
            ("accuracy" | "force", None) => Some(String::new()),
            (_, Some(v)) => csv_cell(v),
            (_, None) => None,
        };
        row.push(cell.ok_or_else(|| format!("missing or non-scalar field `{col}`"))?);
    }
    Ok(row)
}

fn cmd_report(args: &ReportArgs, notes: &mut Vec<String>) -> Result<Value> {
    let paths = glob::glob(&args.inputs)
        .map_err(|e| PottsError::Config(format!("bad glob {:?}: {e}", args.inputs)))?;
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for entry in paths {
        let path = match entry {
            Ok(p) => p,
            Err(e) => {
                notes.push(format!("warning: {e}"));
                skipped += 1;
                continue;
            }
        };
        match report_row(&path) {
            Ok(row) => rows.push(row),
            Err(msg) => {
                notes.push(format!("warning: skipping {}: {msg}", path.display()));
                skipped += 1;
            }
        }
    }
    if rows.is_empty() {
        return Err(PottsError::Parse {
            source_name: args.inputs.clone(),
            line: 0,
            message: format!("no valid run JSON among the inputs ({skipped} skipped)"),
        });
    }
    write_atomic(&args.out, |w| {
        writeln!(w, "{}", REPORT_COLUMNS.join(","))?;
        for row in &rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })?;
    Ok(json!({"command": "report", "out": args.out, "rows": rows.len(), "skipped": skipped}))
}
