//! Confusion-matrix accumulation, per-class IoU / mIoU, and throughput
//! records.
//!
//! Counts are exact integers; IoU values are computed in double precision
//! only at report time, so accumulation order (including parallel sharding
//! plus merge) cannot change any result.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::LabelMask;
use crate::schema::ClassSchema;

/// Row-major n x n grid: rows are ground-truth classes, columns predicted.
/// Pixels whose ground truth or prediction is the ignore id are skipped and
/// tallied in `ignored_pixels`.
#[derive(Debug, Clone)]
pub struct ConfusionMatrix {
    schema: Arc<ClassSchema>,
    counts: Vec<u64>,
    ignored_pixels: u64,
}

impl ConfusionMatrix {
    pub fn new(schema: Arc<ClassSchema>) -> Self {
        let n = schema.len();
        ConfusionMatrix {
            schema,
            counts: vec![0; n * n],
            ignored_pixels: 0,
        }
    }

    pub fn schema(&self) -> &Arc<ClassSchema> {
        &self.schema
    }

    pub fn ignored_pixels(&self) -> u64 {
        self.ignored_pixels
    }

    pub fn count(&self, gt: u8, pred: u8) -> u64 {
        self.counts[gt as usize * self.schema.len() + pred as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.schema.len())
            .map(|r| r.to_vec())
            .collect()
    }

    /// Adds one ground-truth/prediction mask pair.
    pub fn accumulate(&mut self, gt: &LabelMask, pred: &LabelMask) -> Result<()> {
        if !gt.schema.same_as(&self.schema) {
            return Err(Error::SchemaMismatch {
                expected: self.schema.name().to_string(),
                found: gt.schema.name().to_string(),
            });
        }
        if !pred.schema.same_as(&self.schema) {
            return Err(Error::SchemaMismatch {
                expected: self.schema.name().to_string(),
                found: pred.schema.name().to_string(),
            });
        }
        if gt.width != pred.width || gt.height != pred.height {
            return Err(Error::DimensionMismatch {
                left_w: gt.width,
                left_h: gt.height,
                right_w: pred.width,
                right_h: pred.height,
            });
        }
        let n = self.schema.len();
        let ignore = self.schema.ignore_id();
        for (&g, &p) in gt.ids.iter().zip(&pred.ids) {
            if g == ignore || p == ignore {
                self.ignored_pixels += 1;
            } else {
                self.counts[g as usize * n + p as usize] += 1;
            }
        }
        Ok(())
    }

    /// Element-wise sum; shards accumulated in parallel merge to the same
    /// integers as a single sequential pass.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if !other.schema.same_as(&self.schema) {
            return Err(Error::SchemaMismatch {
                expected: self.schema.name().to_string(),
                found: other.schema.name().to_string(),
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.ignored_pixels += other.ignored_pixels;
        Ok(())
    }

    pub fn true_positive(&self, class: u8) -> u64 {
        self.count(class, class)
    }

    pub fn false_positive(&self, class: u8) -> u64 {
        let n = self.schema.len();
        let c = class as usize;
        (0..n).map(|r| self.counts[r * n + c]).sum::<u64>() - self.true_positive(class)
    }

    pub fn false_negative(&self, class: u8) -> u64 {
        let n = self.schema.len();
        let r = class as usize;
        self.counts[r * n..(r + 1) * n].iter().sum::<u64>() - self.true_positive(class)
    }

    /// Per-class IoU: TP / (TP + FP + FN). `None` when the class appears in
    /// neither ground truth nor prediction.
    pub fn iou(&self, class: u8) -> Option<f64> {
        let tp = self.true_positive(class);
        let denom = tp + self.false_positive(class) + self.false_negative(class);
        (denom > 0).then(|| tp as f64 / denom as f64)
    }

    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.schema.len() as u8).map(|c| self.iou(c)).collect()
    }

    /// Mean IoU under the given undefined-class policy.
    pub fn miou(&self, policy: MiouPolicy) -> Result<f64> {
        let ious = self.per_class_iou();
        let (sum, n) = match policy {
            MiouPolicy::SkipUndefined => ious
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, n), &z| (s + z, n + 1)),
            MiouPolicy::CountAsZero => (
                ious.iter().flatten().sum(),
                ious.len(),
            ),
        };
        if n == 0 {
            return Err(Error::EmptyInput("all classes undefined; nothing to average"));
        }
        Ok(sum / n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiouPolicy {
    #[default]
    SkipUndefined,
    CountAsZero,
}

/// Evaluation summary for a mask set.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub schema: String,
    pub image_count: usize,
    pub policy: MiouPolicy,
    pub per_class: Vec<ClassIou>,
    pub miou: f64,
    pub ignored_pixels: u64,
    pub confusion: Vec<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<ThroughputRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassIou {
    pub class: String,
    pub iou: Option<f64>,
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
}

impl EvalReport {
    pub fn from_matrix(
        matrix: &ConfusionMatrix,
        image_count: usize,
        policy: MiouPolicy,
    ) -> Result<EvalReport> {
        let per_class = matrix
            .schema()
            .classes()
            .iter()
            .map(|c| ClassIou {
                class: c.name.clone(),
                iou: matrix.iou(c.id),
                true_positive: matrix.true_positive(c.id),
                false_positive: matrix.false_positive(c.id),
                false_negative: matrix.false_negative(c.id),
            })
            .collect();
        Ok(EvalReport {
            schema: matrix.schema().name().to_string(),
            image_count,
            policy,
            per_class,
            miou: matrix.miou(policy)?,
            ignored_pixels: matrix.ignored_pixels(),
            confusion: matrix.rows(),
            timing: None,
        })
    }

    /// Aligned plain-text table: one column per class plus mIoU.
    pub fn render_table(&self) -> String {
        let mut header: Vec<String> = self.per_class.iter().map(|c| c.class.clone()).collect();
        header.push("mIoU".into());
        let mut values: Vec<String> = self
            .per_class
            .iter()
            .map(|c| match c.iou {
                Some(z) => format!("{:.2}%", z * 100.0),
                None => "n/a".into(),
            })
            .collect();
        values.push(format!("{:.2}%", self.miou * 100.0));
        let widths: Vec<usize> = header
            .iter()
            .zip(&values)
            .map(|(h, v)| h.len().max(v.len()))
            .collect();
        let mut out = String::new();
        for ((h, w), last) in header
            .iter()
            .zip(&widths)
            .zip((0..header.len()).map(|i| i + 1 == header.len()))
        {
            out.push_str(&format!("{h:>w$}", w = w));
            out.push_str(if last { "\n" } else { "  " });
        }
        for ((v, w), last) in values
            .iter()
            .zip(&widths)
            .zip((0..values.len()).map(|i| i + 1 == values.len()))
        {
            out.push_str(&format!("{v:>w$}", w = w));
            out.push_str(if last { "\n" } else { "  " });
        }
        out
    }
}

/// Pipeline stages timed by the benchmark harness. File reads are their own
/// stage so the pure compute cost stays visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    IoRead,
    Decode,
    Remap,
    Cluster,
    Classify,
    Compose,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::IoRead,
        Stage::Decode,
        Stage::Remap,
        Stage::Cluster,
        Stage::Classify,
        Stage::Compose,
        Stage::Evaluate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::IoRead => "io_read",
            Stage::Decode => "decode",
            Stage::Remap => "remap",
            Stage::Cluster => "cluster",
            Stage::Classify => "classify",
            Stage::Compose => "compose",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// Per-stage wall-clock accumulator for one or more frames.
#[derive(Debug, Clone, Default)]
pub struct StageTimings {
    seconds: [f64; 7],
}

impl StageTimings {
    pub fn add(&mut self, stage: Stage, elapsed: Duration) {
        self.seconds[stage as usize] += elapsed.as_secs_f64();
    }

    pub fn merge(&mut self, other: &StageTimings) {
        for (a, b) in self.seconds.iter_mut().zip(&other.seconds) {
            *a += b;
        }
    }

    pub fn get(&self, stage: Stage) -> f64 {
        self.seconds[stage as usize]
    }

    pub fn sum(&self) -> f64 {
        self.seconds.iter().sum()
    }
}

/// Throughput measurement for a benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThroughputRecord {
    pub frames: u64,
    pub warmup_frames: u64,
    pub resolution: (u32, u32),
    /// Wall-clock seconds per stage, summed over measured frames.
    pub stage_seconds: Vec<(String, f64)>,
    pub total_seconds: f64,
    pub fps: f64,
    pub parallel_jobs: usize,
}

impl ThroughputRecord {
    pub fn new(
        frames: u64,
        warmup_frames: u64,
        resolution: (u32, u32),
        timings: &StageTimings,
        total_seconds: f64,
        parallel_jobs: usize,
    ) -> Self {
        ThroughputRecord {
            frames,
            warmup_frames,
            resolution,
            stage_seconds: Stage::ALL
                .iter()
                .map(|s| (s.name().to_string(), timings.get(*s)))
                .collect(),
            total_seconds,
            fps: if total_seconds > 0.0 {
                frames as f64 / total_seconds
            } else {
                0.0
            },
            parallel_jobs,
        }
    }

    pub fn stage_sum(&self) -> f64 {
        self.stage_seconds.iter().map(|(_, s)| s).sum()
    }

    /// Two-column CSV (`stage,seconds`) with total and fps rows appended.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,seconds\n");
        for (name, secs) in &self.stage_seconds {
            out.push_str(&format!("{name},{secs:.6}\n"));
        }
        out.push_str(&format!("total,{:.6}\n", self.total_seconds));
        out.push_str(&format!("fps,{:.3}\n", self.fps));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::Rgb;
    use crate::mask::MaskKind;

    fn schema(n: usize) -> Arc<ClassSchema> {
        Arc::new(
            ClassSchema::new(
                "s",
                (0..n)
                    .map(|i| (format!("c{i}"), Rgb([i as u8 + 1, 0, 0])))
                    .collect(),
                Rgb::BLACK,
            )
            .unwrap(),
        )
    }

    fn mask(s: &Arc<ClassSchema>, w: u32, h: u32, ids: Vec<u8>) -> LabelMask {
        LabelMask::from_ids(w, h, ids, s.clone(), MaskKind::GroundTruth, "t").unwrap()
    }

    #[test]
    fn identical_masks_fill_the_diagonal() {
        let s = schema(2);
        let gt = mask(&s, 10, 10, vec![0; 100]);
        let mut m = ConfusionMatrix::new(s);
        m.accumulate(&gt, &gt).unwrap();
        assert_eq!(m.count(0, 0), 100);
        assert_eq!(m.total(), 100);
    }

    #[test]
    fn disjoint_masks_fill_one_off_diagonal_cell() {
        let s = schema(2);
        let gt = mask(&s, 10, 10, vec![0; 100]);
        let pred = mask(&s, 10, 10, vec![1; 100]);
        let mut m = ConfusionMatrix::new(s);
        m.accumulate(&gt, &pred).unwrap();
        assert_eq!(m.count(0, 1), 100);
        assert_eq!(m.iou(0), Some(0.0));
    }

    #[test]
    fn four_pixel_example_matches_hand_enumeration() {
        // gt = [A, A, B, B], pred = [A, B, B, B]
        let s = schema(2);
        let gt = mask(&s, 4, 1, vec![0, 0, 1, 1]);
        let pred = mask(&s, 4, 1, vec![0, 1, 1, 1]);
        let mut m = ConfusionMatrix::new(s);
        m.accumulate(&gt, &pred).unwrap();
        assert_eq!(m.count(0, 0), 1);
        assert_eq!(m.count(0, 1), 1);
        assert_eq!(m.count(1, 1), 2);
        assert_eq!(m.iou(0), Some(0.5)); // 1 / (1 + 0 + 1)
        assert_eq!(m.iou(1), Some(2.0 / 3.0)); // 2 / (2 + 1 + 0)
        let miou = m.miou(MiouPolicy::SkipUndefined).unwrap();
        assert!((miou - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((miou - 0.5833333333333333).abs() < 1e-12);
    }

    #[test]
    fn ignore_pixels_are_skipped_and_counted() {
        let s = schema(2);
        let ignore = s.ignore_id();
        let gt = mask(&s, 4, 1, vec![0, ignore, 1, 1]);
        let pred = mask(&s, 4, 1, vec![0, 0, ignore, 1]);
        let mut m = ConfusionMatrix::new(s);
        m.accumulate(&gt, &pred).unwrap();
        assert_eq!(m.ignored_pixels(), 2);
        assert_eq!(m.total(), 2);
        assert_eq!(m.total() + m.ignored_pixels(), 4);
    }

    #[test]
    fn perfect_prediction_has_unit_iou_everywhere() {
        let s = schema(4);
        let gt = mask(&s, 4, 2, vec![0, 1, 2, 3, 0, 1, 2, 3]);
        let mut m = ConfusionMatrix::new(s);
        m.accumulate(&gt, &gt).unwrap();
        assert!(m.per_class_iou().iter().all(|z| *z == Some(1.0)));
        assert_eq!(m.miou(MiouPolicy::SkipUndefined).unwrap(), 1.0);
    }

    #[test]
    fn absent_class_is_undefined_and_policy_applies() {
        let s = schema(3);
        let gt = mask(&s, 4, 1, vec![0, 0, 1, 1]);
        let pred = mask(&s, 4, 1, vec![0, 0, 1, 0]);
        let mut m = ConfusionMatrix::new(s);
        m.accumulate(&gt, &pred).unwrap();
        assert_eq!(m.iou(2), None);
        // remaining Z = {1.0 for class 0? no: fp=1 -> 2/3, class 1: 1/2}
        let skip = m.miou(MiouPolicy::SkipUndefined).unwrap();
        let zero = m.miou(MiouPolicy::CountAsZero).unwrap();
        assert!(skip > zero);
    }

    #[test]
    fn policies_average_over_defined_or_all_classes() {
        // class 2 never appears: skip averages the defined values, zero
        // averages over all three.
        let s = schema(3);
        let mut m = ConfusionMatrix::new(s.clone());
        m.accumulate(
            &mask(&s, 4, 1, vec![0, 0, 1, 1]),
            &mask(&s, 4, 1, vec![0, 1, 1, 1]),
        )
        .unwrap();
        let ious = m.per_class_iou();
        assert_eq!(ious[2], None);
        let defined: Vec<f64> = ious.iter().flatten().copied().collect();
        assert_eq!(defined, vec![0.5, 2.0 / 3.0]);
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        assert_eq!(m.miou(MiouPolicy::SkipUndefined).unwrap(), mean);
        assert_eq!(
            m.miou(MiouPolicy::CountAsZero).unwrap(),
            defined.iter().sum::<f64>() / 3.0
        );
    }

    #[test]
    fn all_undefined_errors() {
        let m = ConfusionMatrix::new(schema(2));
        assert!(m.miou(MiouPolicy::SkipUndefined).is_err());
    }

    #[test]
    fn merge_equals_sequential_accumulation() {
        let s = schema(3);
        let pairs: Vec<(LabelMask, LabelMask)> = (0..6)
            .map(|i| {
                let gt = mask(&s, 3, 1, vec![i % 3, (i + 1) % 3, (i + 2) % 3]);
                let pred = mask(&s, 3, 1, vec![(i + 1) % 3, (i + 1) % 3, i % 3]);
                (gt, pred)
            })
            .collect();
        let mut seq = ConfusionMatrix::new(s.clone());
        for (gt, pred) in &pairs {
            seq.accumulate(gt, pred).unwrap();
        }
        let mut shard_a = ConfusionMatrix::new(s.clone());
        let mut shard_b = ConfusionMatrix::new(s.clone());
        for (i, (gt, pred)) in pairs.iter().enumerate() {
            if i % 2 == 0 {
                shard_a.accumulate(gt, pred).unwrap();
            } else {
                shard_b.accumulate(gt, pred).unwrap();
            }
        }
        // merge in the opposite order too: commutative
        let mut ab = shard_a.clone();
        ab.merge(&shard_b).unwrap();
        let mut ba = shard_b.clone();
        ba.merge(&shard_a).unwrap();
        assert_eq!(ab.rows(), seq.rows());
        assert_eq!(ba.rows(), seq.rows());
    }

    #[test]
    fn tp_fp_fn_totals_balance() {
        let s = schema(3);
        let gt = mask(&s, 4, 2, vec![0, 1, 2, 0, 1, 2, 0, 1]);
        let pred = mask(&s, 4, 2, vec![0, 2, 2, 1, 1, 0, 0, 1]);
        let mut m = ConfusionMatrix::new(s.clone());
        m.accumulate(&gt, &pred).unwrap();
        let tp: u64 = (0..3).map(|c| m.true_positive(c)).sum();
        let fp: u64 = (0..3).map(|c| m.false_positive(c)).sum();
        let fn_: u64 = (0..3).map(|c| m.false_negative(c)).sum();
        assert_eq!(tp + fp, m.total());
        assert_eq!(tp + fn_, m.total());
    }

    #[test]
    fn report_table_mentions_every_class() {
        let s = schema(4);
        let gt = mask(&s, 4, 1, vec![0, 1, 2, 3]);
        let mut m = ConfusionMatrix::new(s);
        m.accumulate(&gt, &gt).unwrap();
        let report = EvalReport::from_matrix(&m, 1, MiouPolicy::SkipUndefined).unwrap();
        let table = report.render_table();
        for c in ["c0", "c1", "c2", "c3", "mIoU"] {
            assert!(table.contains(c), "missing {c} in:\n{table}");
        }
        assert!(table.contains("100.00%"));
    }

    #[test]
    fn throughput_record_csv_lists_stages() {
        let mut t = StageTimings::default();
        t.add(Stage::Cluster, Duration::from_millis(5));
        t.add(Stage::Decode, Duration::from_millis(2));
        let rec = ThroughputRecord::new(10, 3, (64, 32), &t, 0.010, 1);
        assert!((rec.fps - 1000.0).abs() < 1e-9);
        let csv = rec.to_csv();
        assert!(csv.contains("cluster,0.005"));
        assert!(csv.contains("fps,"));
        assert!((rec.stage_sum() - 0.007).abs() < 1e-12);
    }
}
