//! The `pgcl` command line: `train`, `eval`, `ablate`, and `embed`.
//!
//! Every run resolves its configuration from (highest precedence first)
//! command-line flags, an optional TOML config file, and built-in defaults,
//! then writes a manifest capturing the fully resolved configuration so the
//! run can be reconstructed from that file alone (`--from-manifest`).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentConfig, AugmentKind};
use crate::encoder::Readout;
use crate::error::{PgclError, Result};
use crate::eval::{embed_all, evaluate, export_embeddings, EvalConfig, EvalReport};
use crate::graphdata::{build_dataset_features, load_tudataset, Dataset, DatasetMeta, FeatureMode};
use crate::losses::LossMode;
use crate::train::{load_checkpoint, train, train_from, OptimizerKind, TrainConfig, TrainRun};

#[derive(Parser)]
#[command(
    name = "pgcl",
    version,
    about = "Self-supervised graph embeddings via prototype clustering and reweighted contrast"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train an encoder on an unlabeled graph dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint with cross-validated linear classification.
    Eval(EvalArgs),
    /// Train and evaluate several loss modes with shared seeds.
    Ablate(AblateArgs),
    /// Embed a dataset with a trained checkpoint and export CSV.
    Embed(EmbedArgs),
}

fn parse_nonneg(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be finite and >= 0"))
    }
}

fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be finite and > 0"))
    }
}

fn parse_ratio(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} must lie in [0, 1)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ReadoutArg {
    Sum,
    Mean,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum FeatureModeArg {
    Auto,
    NodeLabels,
    DegreeOnehot,
    Constant,
}

/// Flags shared by every run that touches a dataset.
#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Dataset name (directory under the data root).
    #[arg(long)]
    dataset: Option<String>,
    /// Data root; falls back to $PGCL_DATA_DIR, then ./data.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Node feature construction.
    #[arg(long, value_enum)]
    feature_mode: Option<FeatureModeArg>,
}

#[derive(Args, Debug, Clone)]
struct TrainFlags {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerKind>,
    /// Write an epoch-tagged checkpoint every N epochs.
    #[arg(long)]
    ckpt_every: Option<usize>,
    #[arg(long)]
    num_prototypes: Option<usize>,
    #[arg(long, value_parser = parse_positive)]
    sinkhorn_eps: Option<f64>,
    #[arg(long)]
    sinkhorn_iters: Option<usize>,
    /// Contrastive temperature.
    #[arg(long, value_parser = parse_positive)]
    tau: Option<f64>,
    /// Consistency weight in the combined objective.
    #[arg(long, value_parser = parse_nonneg)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    loss_mode: Option<LossMode>,
    /// Sum the M_i normalization over unmasked negatives only.
    #[arg(long)]
    mi_masked_sum: bool,
    /// Also contrast view-2 queries against view-1 negatives.
    #[arg(long)]
    symmetric_contrast: bool,
    #[arg(long, value_enum)]
    aug1: Option<AugmentKind>,
    #[arg(long, value_enum)]
    aug2: Option<AugmentKind>,
    #[arg(long, value_parser = parse_ratio)]
    aug_ratio: Option<f64>,
    /// Number of GIN layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden width of the GIN MLPs and projection head.
    #[arg(long)]
    hidden: Option<usize>,
    /// Embedding dimension.
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long, value_enum)]
    readout: Option<ReadoutArg>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: TrainFlags,
    /// Output directory (default: runs/run-<unix-seconds>).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Continue training from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Reconstruct a previous run's configuration from its manifest.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Trained checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write embeddings.csv next to the report.
    #[arg(long)]
    export_embeddings: bool,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: TrainFlags,
    /// Loss modes to compare.
    #[arg(long, value_enum, value_delimiter = ',',
          default_values_t = vec![LossMode::InfoNce, LossMode::ConsistencyOnly,
                                  LossMode::ReweightedOnly, LossMode::InfoNceConsistency,
                                  LossMode::ReweightedConsistency])]
    modes: Vec<LossMode>,
    /// Training seeds per mode (0..n).
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Run the modes on worker threads instead of sequentially.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Output CSV path.
    #[arg(long, default_value = "embeddings.csv")]
    out: PathBuf,
}

/// Optional TOML config; any omitted key falls back to the built-in default.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<String>,
    data_dir: Option<PathBuf>,
    feature_mode: Option<String>,
    seed: Option<u64>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    optimizer: Option<OptimizerKind>,
    ckpt_every: Option<usize>,
    num_prototypes: Option<usize>,
    sinkhorn_eps: Option<f64>,
    sinkhorn_iters: Option<usize>,
    tau: Option<f64>,
    lambda: Option<f64>,
    loss_mode: Option<LossMode>,
    mi_masked_sum: Option<bool>,
    symmetric_contrast: Option<bool>,
    aug1: Option<AugmentKind>,
    aug2: Option<AugmentKind>,
    aug_ratio: Option<f64>,
    layers: Option<usize>,
    hidden: Option<usize>,
    embed_dim: Option<usize>,
    readout: Option<String>,
}

impl FileConfig {
    fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| PgclError::io(path.display().to_string(), e))?;
        toml::from_str(&text)
            .map_err(|e| PgclError::Config(format!("bad config {}: {e}", path.display())))
    }
}

/// Everything identifying a run; written before training begins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub pgcl_version: String,
    pub dataset: String,
    pub data_dir: String,
    pub feature_mode: FeatureMode,
    pub dataset_meta: DatasetMeta,
    pub config: TrainConfig,
    pub out_dir: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn resolve_data_dir(flag: &Option<PathBuf>, file: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("PGCL_DATA_DIR").map(PathBuf::from))
        .or_else(|| file.clone())
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn parse_feature_mode(s: &str) -> Result<Option<FeatureMode>> {
    match s {
        "auto" => Ok(None),
        "node-labels" => Ok(Some(FeatureMode::NodeLabels)),
        "degree-onehot" => Ok(Some(FeatureMode::DegreeOnehot)),
        "constant" => Ok(Some(FeatureMode::Constant)),
        other => Err(PgclError::Config(format!("unknown feature mode {other}"))),
    }
}

fn parse_readout(s: &str) -> Result<Option<Readout>> {
    match s {
        "auto" => Ok(None),
        "sum" => Ok(Some(Readout::Sum)),
        "mean" => Ok(Some(Readout::Mean)),
        other => Err(PgclError::Config(format!("unknown readout {other}"))),
    }
}

/// Load the dataset with the resolved feature mode; `None` picks node-label
/// one-hots when the dataset has them and degree one-hots otherwise.
fn load_prepared(
    data_dir: &Path,
    name: &str,
    mode: Option<FeatureMode>,
) -> Result<(Dataset, FeatureMode)> {
    let mut dataset = load_tudataset(data_dir, name)?;
    let mode = mode.unwrap_or(if dataset.has_node_labels() {
        FeatureMode::NodeLabels
    } else {
        FeatureMode::DegreeOnehot
    });
    build_dataset_features(&mut dataset, mode)?;
    Ok((dataset, mode))
}

struct ResolvedTrain {
    dataset_name: String,
    data_dir: PathBuf,
    feature_mode: Option<FeatureMode>,
    readout: Option<Readout>,
    config: TrainConfig,
}

fn resolve_train(data: &DataArgs, flags: &TrainFlags) -> Result<ResolvedTrain> {
    let file = match &flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let defaults = TrainConfig::default();

    let dataset_name = data
        .dataset
        .clone()
        .or_else(|| file.dataset.clone())
        .ok_or_else(|| PgclError::Config("--dataset is required".into()))?;
    let data_dir = resolve_data_dir(&data.data_dir, &file.data_dir);

    let feature_mode = match data.feature_mode {
        Some(FeatureModeArg::Auto) => None,
        Some(FeatureModeArg::NodeLabels) => Some(FeatureMode::NodeLabels),
        Some(FeatureModeArg::DegreeOnehot) => Some(FeatureMode::DegreeOnehot),
        Some(FeatureModeArg::Constant) => Some(FeatureMode::Constant),
        None => match &file.feature_mode {
            Some(s) => parse_feature_mode(s)?,
            None => None,
        },
    };
    let readout = match flags.readout {
        Some(ReadoutArg::Sum) => Some(Readout::Sum),
        Some(ReadoutArg::Mean) => Some(Readout::Mean),
        Some(ReadoutArg::Auto) => None,
        None => match &file.readout {
            Some(s) => parse_readout(s)?,
            None => None,
        },
    };

    let aug_ratio = flags.aug_ratio.or(file.aug_ratio).unwrap_or(0.2);
    if !(0.0..1.0).contains(&aug_ratio) {
        return Err(PgclError::Config(format!(
            "aug ratio {aug_ratio} must lie in [0, 1)"
        )));
    }
    let aug1 = AugmentConfig::new(
        flags.aug1.or(file.aug1).unwrap_or(AugmentKind::NodeDrop),
        aug_ratio,
    );
    let aug2 = AugmentConfig::new(
        flags.aug2.or(file.aug2).unwrap_or(AugmentKind::EdgePerturb),
        aug_ratio,
    );

    let mut encoder = defaults.encoder.clone();
    encoder.num_layers = flags.layers.or(file.layers).unwrap_or(encoder.num_layers);
    encoder.hidden = flags.hidden.or(file.hidden).unwrap_or(encoder.hidden);
    encoder.embed_dim = flags
        .embed_dim
        .or(file.embed_dim)
        .unwrap_or(encoder.embed_dim);

    let mut loss = defaults.loss.clone();
    loss.tau = flags.tau.or(file.tau).unwrap_or(loss.tau);
    loss.lambda = flags.lambda.or(file.lambda).unwrap_or(loss.lambda);
    loss.mode = flags.loss_mode.or(file.loss_mode).unwrap_or(loss.mode);
    loss.mi_masked_sum = flags.mi_masked_sum || file.mi_masked_sum.unwrap_or(false);
    loss.symmetric_contrast = flags.symmetric_contrast || file.symmetric_contrast.unwrap_or(false);

    let mut sinkhorn = defaults.sinkhorn;
    sinkhorn.eps = flags.sinkhorn_eps.or(file.sinkhorn_eps).unwrap_or(sinkhorn.eps);
    sinkhorn.niters = flags
        .sinkhorn_iters
        .or(file.sinkhorn_iters)
        .unwrap_or(sinkhorn.niters);

    let config = TrainConfig {
        batch_size: flags
            .batch_size
            .or(file.batch_size)
            .unwrap_or(defaults.batch_size),
        epochs: flags.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        lr: flags.lr.or(file.lr).unwrap_or(defaults.lr),
        optimizer: flags
            .optimizer
            .or(file.optimizer)
            .unwrap_or(defaults.optimizer),
        seed: flags.seed.or(file.seed).unwrap_or(defaults.seed),
        num_prototypes: flags
            .num_prototypes
            .or(file.num_prototypes)
            .unwrap_or(defaults.num_prototypes),
        encoder,
        loss,
        sinkhorn,
        aug1,
        aug2,
        ckpt_every: flags.ckpt_every.or(file.ckpt_every).or(defaults.ckpt_every),
    };
    Ok(ResolvedTrain {
        dataset_name,
        data_dir,
        feature_mode,
        readout,
        config,
    })
}

fn default_out_dir() -> PathBuf {
    PathBuf::from(format!("runs/run-{}", now_unix()))
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(path, json).map_err(|e| PgclError::io(path.display().to_string(), e))
}

/// Run `train` and return the finished run plus its manifest.
fn run_train_once(
    dataset: &Dataset,
    feature_mode: FeatureMode,
    data_dir: &Path,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<(TrainRun, RunManifest)> {
    fs::create_dir_all(out_dir).map_err(|e| PgclError::io(out_dir.display().to_string(), e))?;
    let mut manifest = RunManifest {
        pgcl_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset: dataset.meta.name.clone(),
        data_dir: data_dir.display().to_string(),
        feature_mode,
        dataset_meta: dataset.meta.clone(),
        config: config.clone(),
        out_dir: out_dir.display().to_string(),
        started_unix: now_unix(),
        finished_unix: None,
    };
    let manifest_path = out_dir.join("manifest.json");
    write_manifest(&manifest_path, &manifest)?;
    let run = train(dataset, config, out_dir)?;
    manifest.finished_unix = Some(now_unix());
    write_manifest(&manifest_path, &manifest)?;
    Ok((run, manifest))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let out_dir = args.out_dir.clone().unwrap_or_else(default_out_dir);

    if let Some(manifest_path) = &args.from_manifest {
        let text = fs::read_to_string(manifest_path)
            .map_err(|e| PgclError::io(manifest_path.display().to_string(), e))?;
        let manifest: RunManifest = serde_json::from_str(&text)?;
        let (dataset, mode) = load_prepared(
            Path::new(&manifest.data_dir),
            &manifest.dataset,
            Some(manifest.feature_mode),
        )?;
        let (run, _) = run_train_once(&dataset, mode, Path::new(&manifest.data_dir), &manifest.config, &out_dir)?;
        println!(
            "trained {} for {} epochs ({} steps); checkpoint: {}",
            manifest.dataset,
            manifest.config.epochs,
            run.reports.len(),
            run.checkpoint_path.display()
        );
        return Ok(());
    }

    if let Some(ckpt_path) = &args.resume {
        let ckpt = load_checkpoint(ckpt_path)?;
        let data_dir = resolve_data_dir(&args.data.data_dir, &None);
        let (dataset, _) = load_prepared(&data_dir, &ckpt.dataset, Some(ckpt.feature_mode))?;
        let mut config = ckpt.config.clone();
        if let Some(epochs) = args.flags.epochs {
            config.epochs = epochs;
        }
        fs::create_dir_all(&out_dir).map_err(|e| PgclError::io(out_dir.display().to_string(), e))?;
        let run = train_from(&dataset, &config, ckpt.state, &out_dir)?;
        println!(
            "resumed {} to epoch {} ({} new steps); checkpoint: {}",
            ckpt.dataset,
            config.epochs,
            run.reports.len(),
            run.checkpoint_path.display()
        );
        return Ok(());
    }

    let resolved = resolve_train(&args.data, &args.flags)?;
    let (mut dataset, mode) =
        load_prepared(&resolved.data_dir, &resolved.dataset_name, resolved.feature_mode)?;
    let mut config = resolved.config;
    config.encoder.readout = resolved.readout.unwrap_or(if dataset.has_node_labels() {
        Readout::Sum
    } else {
        Readout::Mean
    });
    let _ = &mut dataset;
    let (run, _) = run_train_once(&dataset, mode, &resolved.data_dir, &config, &out_dir)?;
    let final_loss = run.reports.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "trained {} for {} epochs ({} steps, final loss {:.6}); checkpoint: {}",
        resolved.dataset_name,
        config.epochs,
        run.reports.len(),
        final_loss,
        run.checkpoint_path.display()
    );
    Ok(())
}

fn format_report(report: &EvalReport) -> String {
    format!(
        "{}: accuracy {:.1} ± {:.1} % ({} folds × {} repeats)",
        report.dataset,
        report.mean_accuracy * 100.0,
        report.std_accuracy * 100.0,
        report.folds,
        report.repeats
    )
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let data_dir = resolve_data_dir(&args.data.data_dir, &None);
    let name = args.data.dataset.clone().unwrap_or_else(|| ckpt.dataset.clone());
    let (dataset, _) = load_prepared(&data_dir, &name, Some(ckpt.feature_mode))?;

    let eval_cfg = EvalConfig {
        folds: args.folds,
        repeats: args.repeats,
        seed: args.seed,
        ..EvalConfig::default()
    };
    let report = evaluate(&dataset, &ckpt.state.params, &ckpt.config.encoder, &eval_cfg)?;
    println!("{}", format_report(&report));

    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| args.checkpoint.parent().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(|e| PgclError::io(out_dir.display().to_string(), e))?;
    let report_path = out_dir.join("eval_report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .map_err(|e| PgclError::io(report_path.display().to_string(), e))?;
    println!("report: {}", report_path.display());

    if args.export_embeddings {
        let (embeddings, labels) = embed_all(&dataset, &ckpt.state.params, &ckpt.config.encoder)?;
        let csv_path = out_dir.join("embeddings.csv");
        export_embeddings(&embeddings, &labels, &csv_path)?;
        println!("embeddings: {}", csv_path.display());
    }
    Ok(())
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let data_dir = resolve_data_dir(&args.data.data_dir, &None);
    let name = args.data.dataset.clone().unwrap_or_else(|| ckpt.dataset.clone());
    let (dataset, _) = load_prepared(&data_dir, &name, Some(ckpt.feature_mode))?;
    let (embeddings, labels) = embed_all(&dataset, &ckpt.state.params, &ckpt.config.encoder)?;
    export_embeddings(&embeddings, &labels, &args.out)?;
    println!(
        "wrote {} embeddings of dim {} to {}",
        embeddings.rows(),
        embeddings.cols(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct AblationRow {
    mode: String,
    seed: u64,
    mean_accuracy: f64,
    std_accuracy: f64,
}

fn ablate_one(
    dataset: &Dataset,
    feature_mode: FeatureMode,
    data_dir: &Path,
    base: &TrainConfig,
    mode: LossMode,
    seed: u64,
    eval_cfg: &EvalConfig,
    out_dir: &Path,
) -> Result<AblationRow> {
    let mut config = base.clone();
    config.loss.mode = mode;
    config.seed = seed;
    let run_dir = out_dir.join(format!("{mode}-seed{seed}"));
    let (run, _) = run_train_once(dataset, feature_mode, data_dir, &config, &run_dir)?;
    let report = evaluate(dataset, &run.state.params, &config.encoder, eval_cfg)?;
    Ok(AblationRow {
        mode: mode.to_string(),
        seed,
        mean_accuracy: report.mean_accuracy,
        std_accuracy: report.std_accuracy,
    })
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let resolved = resolve_train(&args.data, &args.flags)?;
    let (mut dataset, mode) =
        load_prepared(&resolved.data_dir, &resolved.dataset_name, resolved.feature_mode)?;
    let mut base = resolved.config;
    base.encoder.readout = resolved.readout.unwrap_or(if dataset.has_node_labels() {
        Readout::Sum
    } else {
        Readout::Mean
    });
    let _ = &mut dataset;
    let out_dir = args.out_dir.clone().unwrap_or_else(default_out_dir);
    fs::create_dir_all(&out_dir).map_err(|e| PgclError::io(out_dir.display().to_string(), e))?;
    let eval_cfg = EvalConfig {
        folds: args.folds,
        repeats: args.repeats,
        seed: 0,
        ..EvalConfig::default()
    };

    let jobs: Vec<(LossMode, u64)> = args
        .modes
        .iter()
        .flat_map(|&m| (0..args.seeds as u64).map(move |s| (m, s)))
        .collect();

    let mut rows: Vec<AblationRow> = Vec::with_capacity(jobs.len());
    if args.parallel {
        let results: Vec<Result<AblationRow>> = std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|&(m, s)| {
                    let dataset = &dataset;
                    let base = &base;
                    let eval_cfg = &eval_cfg;
                    let out_dir = &out_dir;
                    let data_dir = &resolved.data_dir;
                    scope.spawn(move || {
                        ablate_one(dataset, mode, data_dir, base, m, s, eval_cfg, out_dir)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for r in results {
            rows.push(r?);
        }
    } else {
        for &(m, s) in &jobs {
            rows.push(ablate_one(
                &dataset,
                mode,
                &resolved.data_dir,
                &base,
                m,
                s,
                &eval_cfg,
                &out_dir,
            )?);
        }
    }

    // per-seed CSV
    let csv_path = out_dir.join("ablation.csv");
    let mut csv = String::from("mode,seed,mean_accuracy,std_accuracy\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            r.mode, r.seed, r.mean_accuracy, r.std_accuracy
        ));
    }
    fs::write(&csv_path, csv).map_err(|e| PgclError::io(csv_path.display().to_string(), e))?;

    // aggregated table
    println!("{:<26} {:>8} {:>8}", "mode", "mean%", "std%");
    for &m in &args.modes {
        let accs: Vec<f64> = rows
            .iter()
            .filter(|r| r.mode == m.to_string())
            .map(|r| r.mean_accuracy)
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64).sqrt();
        println!("{:<26} {:>8.1} {:>8.1}", m.to_string(), mean * 100.0, std * 100.0);
    }
    println!("rows: {}", csv_path.display());
    Ok(())
}

/// Map an error to its process exit code: configuration, ingestion, and
/// checkpoint problems are usage errors (2); everything else is 1.
pub fn exit_code(err: &PgclError) -> i32 {
    match err {
        PgclError::Config(_)
        | PgclError::Ingestion(_)
        | PgclError::Checkpoint(_)
        | PgclError::Stratification(_)
        | PgclError::Format { .. } => 2,
        _ => 1,
    }
}

/// CLI entry point; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Embed(args) => cmd_embed(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
