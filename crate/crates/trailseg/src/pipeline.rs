//! Batch pipeline wiring: configuration, the per-frame post-network flow
//! (decode -> pool -> cluster -> classify -> compose), evaluation, stats,
//! and the throughput harness.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classify::{FileLabels, PoolLabeler, SubClassLabel, SubClassModel};
use crate::color::Rgb;
use crate::compose::{compose, overlay_on_frame, CompositeMask};
use crate::error::{Error, Result};
use crate::imgio;
use crate::kmeans::{cluster_roi, KMeansConfig, PoolStats};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::mask::{class_distribution, extract_roi, remap_mask, Distribution, Frame, LabelMask, MaskKind};
use crate::metrics::{
    ConfusionMatrix, EvalReport, MiouPolicy, Stage, StageTimings, ThroughputRecord,
};
use crate::parallel;
use crate::schema::{ClassSchema, PoolingMap};

/// On-disk pipeline configuration (TOML). Relative paths resolve against
/// the config file's directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub schemas: SchemaPaths,
    pub kmeans: KMeansConfig,
    pub classifier: ClassifierPaths,
    pub compose: ComposeOptions,
    pub metrics: MetricOptions,
    pub run: RunOptions,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaPaths {
    /// 4-class target schema; required.
    pub pooled: PathBuf,
    /// Sub-class schema used for classification and compositing; required.
    pub subclass: PathBuf,
    /// Fine dataset schema; optional. Defaults to the pooling map's schema.
    pub fine: Option<PathBuf>,
    /// Schema config carrying the `[pooling]` table. When set, masks are
    /// decoded against the fine schema and pooled before use.
    pub pooling_map: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierPaths {
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposeOptions {
    pub alpha: f64,
    pub write_blend: bool,
    /// Also export each color pool's member mask as a binary PNG
    /// (`<stem>.pool<i>.png`).
    pub write_pool_masks: bool,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        ComposeOptions {
            alpha: 0.5,
            write_blend: false,
            write_pool_masks: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricOptions {
    pub miou_policy: MiouPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    /// Worker threads for batch commands; 0 means all cores.
    pub jobs: usize,
    pub roi_class: String,
    /// Extra frames processed before the benchmark clock starts.
    pub warmup_frames: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            out_dir: None,
            jobs: 1,
            roi_class: "traversable".into(),
            warmup_frames: 3,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<(PipelineConfig, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: PipelineConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((cfg, base))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loaded, validated pipeline state. Immutable; shared read-only across
/// workers.
pub struct Pipeline {
    pub pooled: Arc<ClassSchema>,
    pub subclass: Arc<ClassSchema>,
    pub pooling: Option<Arc<PoolingMap>>,
    pub model: Option<Arc<SubClassModel>>,
    pub kmeans: KMeansConfig,
    pub compose_opts: ComposeOptions,
    pub policy: MiouPolicy,
    pub roi_class: String,
    pub roi_id: u8,
    pub jobs: usize,
    pub warmup_frames: usize,
}

impl Pipeline {
    pub fn from_config(cfg: &PipelineConfig, base: &Path) -> Result<Pipeline> {
        if cfg.schemas.pooled.as_os_str().is_empty() {
            return Err(Error::Config("schemas.pooled is required".into()));
        }
        if cfg.schemas.subclass.as_os_str().is_empty() {
            return Err(Error::Config("schemas.subclass is required".into()));
        }
        let pooled = ClassSchema::load(resolve(base, &cfg.schemas.pooled))?;
        let subclass = ClassSchema::load(resolve(base, &cfg.schemas.subclass))?;
        let pooling = match &cfg.schemas.pooling_map {
            Some(p) => {
                let map = PoolingMap::load(resolve(base, p), pooled.clone())?;
                if let Some(fine_path) = &cfg.schemas.fine {
                    let fine = ClassSchema::load(resolve(base, fine_path))?;
                    if !fine.same_as(map.source()) {
                        return Err(Error::Config(format!(
                            "schemas.fine `{}` does not match pooling map schema `{}`",
                            fine.name(),
                            map.source().name()
                        )));
                    }
                }
                Some(Arc::new(map))
            }
            None => {
                if cfg.schemas.fine.is_some() {
                    return Err(Error::Config(
                        "schemas.fine is set but schemas.pooling_map is not".into(),
                    ));
                }
                None
            }
        };
        let model = match &cfg.classifier.model {
            Some(p) => Some(Arc::new(SubClassModel::load(resolve(base, p))?)),
            None => None,
        };
        if let Some(m) = &model {
            for class in &m.classes {
                subclass.id_of(class).map_err(|_| {
                    Error::Config(format!(
                        "model class `{class}` is not in sub-class schema `{}`",
                        subclass.name()
                    ))
                })?;
            }
        }
        if !(0.0..=1.0).contains(&cfg.compose.alpha) {
            return Err(Error::Config(format!(
                "compose.alpha {} outside [0, 1]",
                cfg.compose.alpha
            )));
        }
        cfg.kmeans.validate()?;
        let roi_id = pooled.id_of(&cfg.run.roi_class)?;
        Ok(Pipeline {
            pooled,
            subclass,
            pooling,
            model,
            kmeans: cfg.kmeans.clone(),
            compose_opts: cfg.compose.clone(),
            policy: cfg.metrics.miou_policy,
            roi_class: cfg.run.roi_class.clone(),
            roi_id,
            jobs: cfg.run.jobs,
            warmup_frames: cfg.run.warmup_frames,
        })
    }

    /// Schema that mask files decode against (fine when pooling is
    /// configured, pooled otherwise).
    pub fn decode_schema(&self) -> Arc<ClassSchema> {
        match &self.pooling {
            Some(map) => map.source().clone(),
            None => self.pooled.clone(),
        }
    }

    fn labeler(&self, external: Option<&FileLabels>) -> Box<dyn PoolLabeler + '_> {
        if let Some(ext) = external {
            Box::new(ext.clone())
        } else if let Some(model) = &self.model {
            Box::new(ModelRef(model.clone()))
        } else {
            Box::new(UnknownLabeler)
        }
    }
}

struct ModelRef(Arc<SubClassModel>);

impl PoolLabeler for ModelRef {
    fn label_pools(
        &self,
        source_id: &str,
        pools: &[(crate::kmeans::ColorPool, PoolStats)],
    ) -> Result<Vec<(Option<SubClassLabel>, f64)>> {
        self.0.label_pools(source_id, pools)
    }
}

/// Fallback when no classifier is configured: every pool stays unknown.
struct UnknownLabeler;

impl PoolLabeler for UnknownLabeler {
    fn label_pools(
        &self,
        _source_id: &str,
        pools: &[(crate::kmeans::ColorPool, PoolStats)],
    ) -> Result<Vec<(Option<SubClassLabel>, f64)>> {
        Ok(pools.iter().map(|_| (None, 0.0)).collect())
    }
}

/// Stable per-frame seed: FNV-1a over the source id, mixed with the base
/// seed so batches stay reproducible regardless of processing order.
pub fn derive_seed(base: u64, source_id: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ base;
    for b in source_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Machine-readable per-frame record written next to the output PNGs.
#[derive(Debug, Clone, Serialize)]
pub struct Sidecar {
    pub source_id: String,
    pub roi_class: String,
    pub roi_pixels: u64,
    pub empty_roi: bool,
    pub unknown_mask_pixels: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmeans: Option<KMeansSummary>,
    pub pools: Vec<PoolRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KMeansSummary {
    pub requested_k: usize,
    pub effective_k: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub converged: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoolRecord {
    pub centroid: [f64; 3],
    pub count: u64,
    pub fraction: f64,
    pub label: String,
    pub confidence: f64,
}

/// In-memory result of processing one frame end to end.
pub struct FrameResult {
    pub source_id: String,
    pub pooled_mask: LabelMask,
    pub pooled_render: Vec<Rgb>,
    pub classified: Vec<crate::classify::ClassifiedPool>,
    pub composite: CompositeMask,
    pub blend: Option<Vec<Rgb>>,
    pub sidecar: Sidecar,
}

impl Pipeline {
    /// Runs the post-network flow for one already-loaded frame/prediction
    /// pair, accumulating per-stage wall time into `timings`.
    pub fn process_frame(
        &self,
        frame: &Frame,
        prediction: image::DynamicImage,
        external: Option<&FileLabels>,
        base_seed: u64,
        timings: &mut StageTimings,
    ) -> Result<FrameResult> {
        let source_id = frame.source_id.clone();

        let t = Instant::now();
        let decoded = imgio::decode_image(
            prediction,
            self.decode_schema(),
            MaskKind::Prediction,
            source_id.clone(),
        )?;
        timings.add(Stage::Decode, t.elapsed());
        if decoded.unknown_pixels > 0 {
            log::warn!(
                "{source_id}: {} off-palette pixels mapped to ignore",
                decoded.unknown_pixels
            );
        }
        let unknown_mask_pixels = decoded.unknown_pixels;

        let t = Instant::now();
        let pooled_mask = match &self.pooling {
            Some(map) => remap_mask(&decoded.mask, map)?,
            None => decoded.mask,
        };
        timings.add(Stage::Remap, t.elapsed());
        if pooled_mask.width != frame.width || pooled_mask.height != frame.height {
            return Err(Error::DimensionMismatch {
                left_w: frame.width,
                left_h: frame.height,
                right_w: pooled_mask.width,
                right_h: pooled_mask.height,
            });
        }

        let t = Instant::now();
        let (roi, roi_pixels) = extract_roi(&pooled_mask, self.roi_id)?;
        let clustering = if roi_pixels == 0 {
            None
        } else {
            let mut cfg = self.kmeans.clone();
            cfg.seed = derive_seed(base_seed, &source_id);
            Some((cluster_roi(frame, &roi, &cfg)?, cfg.seed))
        };
        timings.add(Stage::Cluster, t.elapsed());

        let t = Instant::now();
        let labeler = self.labeler(external);
        let classified = match &clustering {
            Some((outcome, _)) => crate::classify::classify_pools(
                labeler.as_ref(),
                outcome.pools.clone(),
                frame,
                self.kmeans.color_space,
                &source_id,
            )?,
            None => Vec::new(),
        };
        timings.add(Stage::Classify, t.elapsed());

        let t = Instant::now();
        let composite = compose(&pooled_mask, &classified, &self.subclass, self.roi_id)?;
        let pooled_render = crate::mask::encode_mask(&pooled_mask);
        let blend = if self.compose_opts.write_blend {
            Some(overlay_on_frame(&composite, frame, self.compose_opts.alpha)?)
        } else {
            None
        };
        timings.add(Stage::Compose, t.elapsed());

        let kmeans_summary = clustering.as_ref().map(|(o, seed)| KMeansSummary {
            requested_k: o.requested_k,
            effective_k: o.effective_k,
            iterations: o.iterations,
            inertia: o.inertia,
            converged: o.converged,
            seed: *seed,
        });
        let pools = classified
            .iter()
            .map(|cp| PoolRecord {
                centroid: cp.pool.centroid,
                count: cp.pool.count,
                fraction: cp.stats.fraction,
                label: cp
                    .label
                    .as_ref()
                    .map(|l| l.name.clone())
                    .unwrap_or_else(|| "unknown".into()),
                confidence: cp.confidence,
            })
            .collect();
        let sidecar = Sidecar {
            source_id: source_id.clone(),
            roi_class: self.roi_class.clone(),
            roi_pixels,
            empty_roi: roi_pixels == 0,
            unknown_mask_pixels,
            kmeans: kmeans_summary,
            pools,
        };
        Ok(FrameResult {
            source_id,
            pooled_mask,
            pooled_render,
            classified,
            composite,
            blend,
            sidecar,
        })
    }

    fn load_entry_frame(&self, entry: &ManifestEntry, timings: &mut StageTimings) -> Result<(Frame, image::DynamicImage)> {
        let pred_path = entry
            .prediction
            .as_ref()
            .ok_or_else(|| Error::Manifest {
                path: entry.frame.clone(),
                message: "entry has no prediction mask".into(),
            })?;
        let t = Instant::now();
        let frame_img = imgio::read_image(&entry.frame)?;
        let pred_img = imgio::read_image(pred_path)?;
        let frame = imgio::frame_from_image(frame_img, entry.stem())?;
        timings.add(Stage::IoRead, t.elapsed());
        Ok((frame, pred_img))
    }
}

/// Outcome of a batch command.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BatchSummary {
    pub processed: usize,
    pub skipped: Vec<(String, String)>,
    pub failed: Vec<(String, String)>,
    pub warnings: u64,
}

impl BatchSummary {
    pub fn ok(&self) -> bool {
        self.failed.is_empty()
    }
}

enum EntryOutcome {
    Done { warnings: u64 },
    Skipped(String, String),
    Failed(String, String),
}

/// Runs segment-post over a manifest, writing `<stem>.pooled.png`,
/// `<stem>.final.png`, optional `<stem>.blend.png` and `<stem>.pools.json`
/// per entry. Entries without a prediction are skipped and reported;
/// failures are logged and the batch continues.
pub fn run_segment_post(
    pipeline: &Pipeline,
    manifest: &DatasetManifest,
    out_dir: &Path,
    external: Option<&FileLabels>,
    base_seed: u64,
) -> Result<BatchSummary> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no entries"));
    }
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let outcomes = parallel::map_collect(&manifest.entries, |entry| {
        let stem = entry.stem();
        if entry.prediction.is_none() {
            return EntryOutcome::Skipped(stem, "no prediction mask".into());
        }
        let mut timings = StageTimings::default();
        let mut run = || -> Result<u64> {
            let (frame, pred) = pipeline.load_entry_frame(entry, &mut timings)?;
            let result =
                pipeline.process_frame(&frame, pred, external, base_seed, &mut timings)?;
            write_frame_outputs(out_dir, &result, pipeline.compose_opts.write_pool_masks)?;
            Ok(result.sidecar.unknown_mask_pixels)
        };
        match run() {
            Ok(warnings) => EntryOutcome::Done { warnings },
            Err(e) => EntryOutcome::Failed(stem, e.to_string()),
        }
    });
    let mut summary = BatchSummary::default();
    for o in outcomes {
        match o {
            EntryOutcome::Done { warnings } => {
                summary.processed += 1;
                summary.warnings += warnings;
            }
            EntryOutcome::Skipped(id, why) => summary.skipped.push((id, why)),
            EntryOutcome::Failed(id, why) => {
                log::error!("{id}: {why}");
                summary.failed.push((id, why));
            }
        }
    }
    Ok(summary)
}

fn write_frame_outputs(out_dir: &Path, result: &FrameResult, pool_masks: bool) -> Result<()> {
    let stem = &result.source_id;
    imgio::save_rgb(
        out_dir.join(format!("{stem}.pooled.png")),
        result.pooled_mask.width,
        result.pooled_mask.height,
        &result.pooled_render,
    )?;
    imgio::save_rgb(
        out_dir.join(format!("{stem}.final.png")),
        result.composite.width,
        result.composite.height,
        &result.composite.rendered,
    )?;
    if let Some(blend) = &result.blend {
        imgio::save_rgb(
            out_dir.join(format!("{stem}.blend.png")),
            result.composite.width,
            result.composite.height,
            blend,
        )?;
    }
    if pool_masks {
        for (i, cp) in result.classified.iter().enumerate() {
            let path = out_dir.join(format!("{stem}.pool{i}.png"));
            let bytes: Vec<u8> = cp
                .pool
                .members
                .bits
                .iter()
                .map(|&b| if b { 255 } else { 0 })
                .collect();
            let img = image::GrayImage::from_raw(cp.pool.members.width, cp.pool.members.height, bytes)
                .expect("member mask matches dimensions");
            img.save(&path).map_err(|source| Error::Image { path, source })?;
        }
    }
    let sidecar_path = out_dir.join(format!("{stem}.pools.json"));
    let json = serde_json::to_string_pretty(&result.sidecar).expect("sidecar serializes");
    std::fs::write(&sidecar_path, json).map_err(|source| Error::Io {
        path: sidecar_path,
        source,
    })
}

/// Writes pooled ground-truth masks (`<stem>.pooled.png`) for every entry.
pub fn run_remap(
    pipeline: &Pipeline,
    manifest: &DatasetManifest,
    out_dir: &Path,
) -> Result<BatchSummary> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no entries"));
    }
    let map = pipeline
        .pooling
        .as_ref()
        .ok_or_else(|| Error::Config("remap requires schemas.pooling_map".into()))?;
    map.ensure_total()?;
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let outcomes = parallel::map_collect(&manifest.entries, |entry| {
        let stem = imgio::stem_of(&entry.ground_truth);
        let run = || -> Result<u64> {
            let decoded = imgio::load_mask(
                &entry.ground_truth,
                map.source().clone(),
                MaskKind::GroundTruth,
            )?;
            if decoded.unknown_pixels > 0 {
                log::warn!("{stem}: {} off-palette pixels", decoded.unknown_pixels);
            }
            let pooled = remap_mask(&decoded.mask, map)?;
            imgio::save_rgb(
                out_dir.join(format!("{stem}.pooled.png")),
                pooled.width,
                pooled.height,
                &crate::mask::encode_mask(&pooled),
            )?;
            Ok(decoded.unknown_pixels)
        };
        match run() {
            Ok(warnings) => EntryOutcome::Done { warnings },
            Err(e) => EntryOutcome::Failed(stem, e.to_string()),
        }
    });
    let mut summary = BatchSummary::default();
    for o in outcomes {
        match o {
            EntryOutcome::Done { warnings } => {
                summary.processed += 1;
                summary.warnings += warnings;
            }
            EntryOutcome::Skipped(id, why) => summary.skipped.push((id, why)),
            EntryOutcome::Failed(id, why) => {
                log::error!("{id}: {why}");
                summary.failed.push((id, why));
            }
        }
    }
    Ok(summary)
}

/// Decodes a mask file and pools it when a map is configured.
fn load_pooled(pipeline: &Pipeline, path: &Path, kind: MaskKind) -> Result<LabelMask> {
    let decoded = imgio::load_mask(path, pipeline.decode_schema(), kind)?;
    if decoded.unknown_pixels > 0 {
        log::warn!(
            "{}: {} off-palette pixels mapped to ignore",
            path.display(),
            decoded.unknown_pixels
        );
    }
    match &pipeline.pooling {
        Some(map) => remap_mask(&decoded.mask, map),
        None => Ok(decoded.mask),
    }
}

/// Confusion-matrix evaluation of predictions against ground truth over the
/// pooled schema. Per-entry matrices accumulate in parallel and merge.
pub fn run_eval(pipeline: &Pipeline, manifest: &DatasetManifest) -> Result<EvalReport> {
    let entries: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| e.prediction.is_some())
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyInput("no manifest entries carry predictions"));
    }
    let shards = parallel::map_collect(&entries, |entry| -> Result<ConfusionMatrix> {
        let gt = load_pooled(pipeline, &entry.ground_truth, MaskKind::GroundTruth)?;
        let pred = load_pooled(
            pipeline,
            entry.prediction.as_ref().expect("filtered"),
            MaskKind::Prediction,
        )?;
        let mut m = ConfusionMatrix::new(pipeline.pooled.clone());
        m.accumulate(&gt, &pred)?;
        Ok(m)
    });
    let mut matrix = ConfusionMatrix::new(pipeline.pooled.clone());
    for shard in shards {
        matrix.merge(&shard?)?;
    }
    EvalReport::from_matrix(&matrix, entries.len(), pipeline.policy)
}

/// Class-distribution report over ground-truth masks; `pooled` switches
/// between the decode schema and the pooled schema.
pub fn run_stats(
    pipeline: &Pipeline,
    manifest: &DatasetManifest,
    pooled: bool,
) -> Result<Distribution> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no entries"));
    }
    let per_mask = parallel::map_collect(&manifest.entries, |entry| -> Result<Distribution> {
        let mask = if pooled {
            load_pooled(pipeline, &entry.ground_truth, MaskKind::GroundTruth)?
        } else {
            let decoded = imgio::load_mask(
                &entry.ground_truth,
                pipeline.decode_schema(),
                MaskKind::GroundTruth,
            )?;
            decoded.mask
        };
        class_distribution(&[&mask])
    });
    let mut iter = per_mask.into_iter();
    let mut total = iter.next().expect("non-empty manifest")?;
    for d in iter {
        total.merge(&d?);
    }
    Ok(total)
}

/// Throughput harness. Processes `warmup` extra frames first (cycling the
/// manifest), then measures `entries x repetitions` frames end to end with
/// per-stage wall-clock accounting. Runs single-threaded so stage timings
/// stay interpretable; `parallel_jobs > 1` reports aggregate fps only.
pub fn run_bench(
    pipeline: &Pipeline,
    manifest: &DatasetManifest,
    repetitions: usize,
    parallel_jobs: usize,
) -> Result<ThroughputRecord> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no entries"));
    }
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let entries: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| e.prediction.is_some())
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyInput("no manifest entries carry predictions"));
    }

    let bench_one = |entry: &ManifestEntry,
                     timings: &mut StageTimings,
                     matrix: &mut Option<ConfusionMatrix>|
     -> Result<(u32, u32)> {
        let (frame, pred) = pipeline.load_entry_frame(entry, timings)?;
        let result = pipeline.process_frame(&frame, pred, None, pipeline.kmeans.seed, timings)?;
        let t = Instant::now();
        if entry.ground_truth.exists() {
            let gt = load_pooled(pipeline, &entry.ground_truth, MaskKind::GroundTruth)?;
            let m = matrix.get_or_insert_with(|| ConfusionMatrix::new(pipeline.pooled.clone()));
            m.accumulate(&gt, &result.pooled_mask)?;
        }
        timings.add(Stage::Evaluate, t.elapsed());
        Ok((frame.width, frame.height))
    };

    // Warm-up frames are extra work before the clock starts.
    let warmup = pipeline.warmup_frames;
    let mut scratch_timings = StageTimings::default();
    let mut scratch_matrix = None;
    let mut resolution = (0, 0);
    for i in 0..warmup {
        let entry = entries[i % entries.len()];
        resolution = bench_one(entry, &mut scratch_timings, &mut scratch_matrix)?;
    }

    let frames = (entries.len() * repetitions) as u64;
    let mut timings = StageTimings::default();
    let mut matrix = None;
    let started = Instant::now();
    if parallel_jobs > 1 {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(parallel_jobs)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            type BenchShard = (StageTimings, Option<ConfusionMatrix>, (u32, u32));
            let jobs: Vec<&ManifestEntry> = (0..repetitions)
                .flat_map(|_| entries.iter().copied())
                .collect();
            let shards: Vec<Result<BenchShard>> = pool.install(|| {
                jobs.par_iter()
                    .map(|&entry| {
                        let mut t = StageTimings::default();
                        let mut m = None;
                        let res = bench_one(entry, &mut t, &mut m)?;
                        Ok((t, m, res))
                    })
                    .collect()
            });
            for shard in shards {
                let (t, m, res) = shard?;
                timings.merge(&t);
                if let Some(m) = m {
                    matrix
                        .get_or_insert_with(|| ConfusionMatrix::new(pipeline.pooled.clone()))
                        .merge(&m)?;
                }
                resolution = res;
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            return Err(Error::Config(
                "parallel bench requires the `parallel` feature".into(),
            ));
        }
    } else {
        for _ in 0..repetitions {
            for entry in &entries {
                resolution = bench_one(entry, &mut timings, &mut matrix)?;
            }
        }
    }
    let total_seconds = started.elapsed().as_secs_f64();
    if let Some(m) = &matrix {
        match m.miou(pipeline.policy) {
            Ok(miou) => log::info!("bench miou over {} frames: {:.4}", frames, miou),
            Err(e) => log::warn!("bench miou unavailable: {e}"),
        }
    }
    Ok(ThroughputRecord::new(
        frames,
        warmup as u64,
        resolution,
        &timings,
        total_seconds,
        parallel_jobs.max(1),
    ))
}

/// Configures the global worker pool; call once at startup. No-op without
/// the `parallel` feature.
pub fn configure_jobs(jobs: usize) {
    #[cfg(feature = "parallel")]
    {
        if jobs > 0 {
            // Ignore the error when a pool already exists (e.g. in tests).
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        if jobs > 1 {
            log::warn!("built without the `parallel` feature; running single-threaded");
        }
    }
}
