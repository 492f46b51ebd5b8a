//! `trailseg`: batch CLI for the off-road segmentation post-processing
//! pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
//! error. Human-readable summaries go to stderr; machine-readable results
//! go to files (and to stdout with `--json`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trailseg::classify::{self, FileLabels, TrainConfig};
use trailseg::error::Error;
use trailseg::manifest::load_manifest;
use trailseg::pipeline::{self, Pipeline, PipelineConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "trailseg", version, about = "Off-road segmentation post-processing toolkit")]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, env = "TRAILSEG_CONFIG")]
    config: Option<PathBuf>,

    /// Emit summaries as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    /// Override the clustering seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the worker count (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Override the number of color pools per image.
    #[arg(long, global = true)]
    k: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ManifestArg {
    /// Dataset manifest (CSV: frame,ground_truth,prediction,split).
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Load the configuration and report problems without processing data.
    ValidateConfig,
    /// Pool fine-grained ground-truth masks into the 4-class schema.
    Remap {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the post-network pipeline: cluster, classify and composite the
    /// traversable region of every predicted mask.
    SegmentPost {
        #[command(flatten)]
        manifest: ManifestArg,
        #[arg(long)]
        out: PathBuf,
        /// Externally produced pool labels (JSON: source id -> labels).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Also export each pool's member mask as a binary PNG.
        #[arg(long)]
        pool_masks: bool,
    },
    /// Evaluate predictions against ground truth (per-class IoU and mIoU).
    Eval {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Directory for the JSON report (defaults to run.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Class-distribution statistics over ground-truth masks.
    Stats {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Report over the pooled schema instead of the decode schema.
        #[arg(long)]
        pooled: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the sub-class classifier from labeled samples.
    TrainClassifier {
        /// CSV of labeled statistics rows.
        #[arg(long, conflicts_with = "crops")]
        samples: Option<PathBuf>,
        /// Directory of labeled crops (<root>/<label>/*.png).
        #[arg(long)]
        crops: Option<PathBuf>,
        /// Where to write the model (TOML).
        #[arg(long)]
        model_out: PathBuf,
        /// Optional held-out CSV for an accuracy report.
        #[arg(long)]
        holdout: Option<PathBuf>,
    },
    /// Measure pipeline throughput over a manifest.
    Bench {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Repetitions over the manifest.
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-stage timings as CSV.
        #[arg(long)]
        csv: bool,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::MissingPoolingTable { .. }
        | Error::DuplicateClassName { .. }
        | Error::DuplicateClassColor { .. }
        | Error::IgnoreColorCollision { .. }
        | Error::SchemaTooLarge { .. }
        | Error::UnknownPoolingSource { .. }
        | Error::UnknownPoolingTarget { .. }
        | Error::IncompletePooling { .. }
        | Error::UnknownClassName { .. } => EXIT_CONFIG,
        Error::OverlayOutsideRoi { .. } | Error::OverlappingOverlays { .. } | Error::KMeans(_) => {
            EXIT_INTERNAL
        }
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.code)
        }
    }
}

struct CmdError {
    code: u8,
    message: String,
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<Error> for CmdError {
    fn from(e: Error) -> Self {
        CmdError {
            code: exit_code_for(&e),
            message: e.to_string(),
        }
    }
}

fn config_err(message: impl Into<String>) -> CmdError {
    CmdError {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn data_err(message: impl Into<String>) -> CmdError {
    CmdError {
        code: EXIT_DATA,
        message: message.into(),
    }
}

fn load_pipeline(cli: &Cli) -> Result<(Pipeline, PipelineConfig, PathBuf), CmdError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| config_err("--config is required (or set TRAILSEG_CONFIG)"))?;
    let (mut cfg, base) = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.kmeans.seed = seed;
    }
    if let Some(k) = cli.k {
        cfg.kmeans.k = k;
    }
    if let Some(jobs) = cli.jobs {
        cfg.run.jobs = jobs;
    }
    let pipeline = Pipeline::from_config(&cfg, &base)?;
    Ok((pipeline, cfg, base))
}

fn out_dir(explicit: Option<&Path>, cfg: &PipelineConfig, base: &Path) -> Result<PathBuf, CmdError> {
    if let Some(p) = explicit {
        return Ok(p.to_path_buf());
    }
    cfg.run
        .out_dir
        .as_ref()
        .map(|p| if p.is_absolute() { p.clone() } else { base.join(p) })
        .ok_or_else(|| config_err("no output directory: pass --out or set run.out_dir"))
}

fn print_json(cli: &Cli, value: &serde_json::Value) {
    if cli.json {
        println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CmdError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| data_err(format!("create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| data_err(format!("write {}: {e}", path.display())))
}

fn batch_result(cli: &Cli, name: &str, summary: &pipeline::BatchSummary) -> Result<(), CmdError> {
    log::info!(
        "{name}: {} processed, {} skipped, {} failed, {} off-palette pixels",
        summary.processed,
        summary.skipped.len(),
        summary.failed.len(),
        summary.warnings
    );
    for (id, why) in &summary.skipped {
        log::warn!("skipped {id}: {why}");
    }
    print_json(
        cli,
        &serde_json::json!({
            "command": name,
            "processed": summary.processed,
            "skipped": summary.skipped,
            "failed": summary.failed,
            "off_palette_pixels": summary.warnings,
        }),
    );
    if summary.ok() {
        Ok(())
    } else {
        Err(data_err(format!(
            "{name}: {} entries failed",
            summary.failed.len()
        )))
    }
}

fn run(cli: &Cli) -> Result<(), CmdError> {
    match &cli.command {
        Command::ValidateConfig => {
            let (pipeline, cfg, _) = load_pipeline(cli)?;
            let mut report = serde_json::json!({
                "pooled_schema": pipeline.pooled.name(),
                "pooled_classes": pipeline.pooled.len(),
                "subclass_schema": pipeline.subclass.name(),
                "subclasses": pipeline.subclass.len(),
                "roi_class": pipeline.roi_class,
                "kmeans_k": cfg.kmeans.k,
                "model": pipeline.model.as_ref().map(|m| m.classes.clone()),
            });
            if let Some(map) = &pipeline.pooling {
                map.ensure_total()?;
                let validation = map.validate();
                log::info!(
                    "pooling {} -> {}: {} source classes, 0 unmapped",
                    validation.source,
                    validation.target,
                    validation.source_classes
                );
                for bucket in &validation.buckets {
                    log::info!("  {} <- {} classes", bucket.target, bucket.count);
                }
                report["pooling"] = serde_json::to_value(&validation).expect("serializable");
            }
            log::info!("configuration OK");
            print_json(cli, &report);
            Ok(())
        }
        Command::Remap { manifest, out } => {
            let (pipeline, cfg, base) = load_pipeline(cli)?;
            pipeline::configure_jobs(pipeline.jobs);
            let m = load_manifest(&manifest.manifest)?;
            let dir = out_dir(Some(out), &cfg, &base)?;
            let summary = pipeline::run_remap(&pipeline, &m, &dir)?;
            batch_result(cli, "remap", &summary)
        }
        Command::SegmentPost {
            manifest,
            out,
            labels,
            pool_masks,
        } => {
            let (mut pipeline, cfg, base) = load_pipeline(cli)?;
            if *pool_masks {
                pipeline.compose_opts.write_pool_masks = true;
            }
            pipeline::configure_jobs(pipeline.jobs);
            let m = load_manifest(&manifest.manifest)?;
            let dir = out_dir(Some(out), &cfg, &base)?;
            let external = match labels {
                Some(path) => {
                    let names: Vec<String> = pipeline
                        .subclass
                        .classes()
                        .iter()
                        .map(|c| c.name.clone())
                        .collect();
                    Some(FileLabels::load(path, &names)?)
                }
                None => None,
            };
            let summary = pipeline::run_segment_post(
                &pipeline,
                &m,
                &dir,
                external.as_ref(),
                cfg.kmeans.seed,
            )?;
            batch_result(cli, "segment-post", &summary)
        }
        Command::Eval { manifest, out } => {
            let (pipeline, cfg, base) = load_pipeline(cli)?;
            pipeline::configure_jobs(pipeline.jobs);
            let m = load_manifest(&manifest.manifest)?;
            let report = pipeline::run_eval(&pipeline, &m)?;
            eprintln!("{}", report.render_table());
            let json = serde_json::to_value(&report).expect("serializable");
            if let Ok(dir) = out_dir(out.as_deref(), &cfg, &base) {
                let path = dir.join("eval_report.json");
                write_text(&path, &serde_json::to_string_pretty(&json).expect("serializable"))?;
                log::info!("report written to {}", path.display());
            }
            print_json(cli, &json);
            Ok(())
        }
        Command::Stats {
            manifest,
            pooled,
            out,
        } => {
            let (pipeline, cfg, base) = load_pipeline(cli)?;
            pipeline::configure_jobs(pipeline.jobs);
            let m = load_manifest(&manifest.manifest)?;
            let dist = pipeline::run_stats(&pipeline, &m, *pooled)?;
            let schema = if *pooled {
                pipeline.pooled.clone()
            } else {
                pipeline.decode_schema()
            };
            eprintln!("class distribution over {} masks:", dist.mask_count);
            for (class, (&count, &fraction)) in schema
                .classes()
                .iter()
                .zip(dist.counts.iter().zip(&dist.fractions))
            {
                eprintln!("  {:>16}  {:>12} px  {:>7.3}%", class.name, count, fraction * 100.0);
            }
            eprintln!("  {:>16}  {:>12} px", "(ignored)", dist.ignored_pixels);
            let json = serde_json::to_value(&dist).expect("serializable");
            if let Ok(dir) = out_dir(out.as_deref(), &cfg, &base) {
                let path = dir.join("class_distribution.json");
                write_text(&path, &serde_json::to_string_pretty(&json).expect("serializable"))?;
            }
            print_json(cli, &json);
            Ok(())
        }
        Command::TrainClassifier {
            samples,
            crops,
            model_out,
            holdout,
        } => {
            let (pipeline, cfg, _) = load_pipeline(cli)?;
            let data = match (samples, crops) {
                (Some(csv), None) => classify::load_samples_csv(csv)?,
                (None, Some(dir)) => {
                    classify::load_samples_from_crops(dir, cfg.kmeans.color_space)?
                }
                _ => return Err(config_err("pass exactly one of --samples or --crops")),
            };
            let names: Vec<String> = pipeline
                .subclass
                .classes()
                .iter()
                .map(|c| c.name.clone())
                .collect();
            // Train only over sub-classes that actually have samples, but
            // insist every sample label is a declared sub-class.
            let present: Vec<String> = names
                .iter()
                .filter(|n| data.iter().any(|s| &s.label == *n))
                .cloned()
                .collect();
            for s in &data {
                if !names.contains(&s.label) {
                    return Err(data_err(format!(
                        "sample label `{}` is not in sub-class schema `{}`",
                        s.label,
                        pipeline.subclass.name()
                    )));
                }
            }
            let train_cfg = TrainConfig {
                color_space: cfg.kmeans.color_space,
                ..TrainConfig::default()
            };
            let model = classify::train(&present, &data, &train_cfg)?;
            model.save(model_out)?;
            log::info!(
                "trained {} sub-classes from {} samples -> {}",
                model.classes.len(),
                model.trained_samples,
                model_out.display()
            );
            let mut json = serde_json::json!({
                "model": model_out.display().to_string(),
                "classes": model.classes,
                "samples": model.trained_samples,
            });
            if let Some(holdout_csv) = holdout {
                let held = classify::load_samples_csv(holdout_csv)?;
                let report = classify::evaluate_classifier(&model, &held)?;
                log::info!(
                    "held-out accuracy {:.2}% over {} samples",
                    report.mean_accuracy * 100.0,
                    report.samples
                );
                json["holdout"] = serde_json::to_value(&report).expect("serializable");
            }
            print_json(cli, &json);
            Ok(())
        }
        Command::Bench {
            manifest,
            reps,
            out,
            csv,
        } => {
            let (pipeline, cfg, base) = load_pipeline(cli)?;
            let m = load_manifest(&manifest.manifest)?;
            let record = pipeline::run_bench(&pipeline, &m, *reps, pipeline.jobs)?;
            eprintln!(
                "{} frames at {}x{}: {:.2} fps ({:.3}s total, warmup {})",
                record.frames,
                record.resolution.0,
                record.resolution.1,
                record.fps,
                record.total_seconds,
                record.warmup_frames
            );
            for (stage, secs) in &record.stage_seconds {
                eprintln!("  {:>9}  {:>9.4}s", stage, secs);
            }
            let json = serde_json::to_value(&record).expect("serializable");
            if let Ok(dir) = out_dir(out.as_deref(), &cfg, &base) {
                write_text(
                    &dir.join("throughput.json"),
                    &serde_json::to_string_pretty(&json).expect("serializable"),
                )?;
                if *csv {
                    write_text(&dir.join("throughput.csv"), &record.to_csv())?;
                }
            }
            print_json(cli, &json);
            Ok(())
        }
    }
}
