//! Sub-class labeling of color pools.
//!
//! Pools are scored against per-class color signatures: a diagonal Gaussian
//! over the pool's mean color plus a log prior. The model is trained from
//! labeled pool statistics (CSV rows or a directory of labeled image
//! crops), serialized as versioned TOML, and is immutable after training.
//!
//! Externally produced labels (e.g. from a CNN) can be plugged in through
//! [`PoolLabeler`]; [`FileLabels`] reads them from a JSON sidecar.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::color::ColorSpace;
use crate::error::{Error, Result};
use crate::kmeans::{ColorPool, PoolStats};
use crate::mask::Frame;

pub const MODEL_VERSION: u32 = 1;

/// A sub-class assignment: index and name within the model's class list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubClassLabel {
    pub id: u8,
    pub name: String,
}

/// Per-class signature: mean color, per-channel variance (floored to stay
/// positive), class prior, and the score floor under which a query is
/// labeled unknown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Signature {
    pub mean: [f64; 3],
    pub variance: [f64; 3],
    pub prior: f64,
    pub score_floor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubClassModel {
    pub version: u32,
    pub color_space: ColorSpace,
    pub trained_samples: usize,
    pub classes: Vec<String>,
    pub signatures: Vec<Signature>,
}

/// One training observation: pool statistics plus the true label.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub stats: PoolStats,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Variance floor applied per channel; degenerate (all-identical)
    /// classes are floored here and reported with a warning.
    pub variance_floor: f64,
    /// Quantile of each class's training scores used as its unknown
    /// threshold; `None` disables unknown detection.
    pub unknown_quantile: Option<f64>,
    pub color_space: ColorSpace,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variance_floor: 1e-6,
            unknown_quantile: Some(0.001),
            color_space: ColorSpace::Rgb,
        }
    }
}

/// Trains per-class signatures from labeled samples. Every declared class
/// needs at least one sample; sample labels outside the declared list are
/// an error.
pub fn train(
    class_names: &[String],
    samples: &[TrainingSample],
    cfg: &TrainConfig,
) -> Result<SubClassModel> {
    if class_names.is_empty() {
        return Err(Error::Classifier("no sub-classes declared".into()));
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("classifier training needs samples"));
    }
    let index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let n_classes = class_names.len();
    let mut features: Vec<Vec<[f64; 3]>> = vec![Vec::new(); n_classes];
    for s in samples {
        let &class = index
            .get(s.label.as_str())
            .ok_or_else(|| Error::Classifier(format!("sample labeled `{}` is not a declared sub-class", s.label)))?;
        features[class].push(s.stats.features());
    }
    if let Some(empty) = features.iter().position(Vec::is_empty) {
        return Err(Error::Classifier(format!(
            "sub-class `{}` has zero training samples",
            class_names[empty]
        )));
    }

    let total = samples.len() as f64;
    let mut signatures = Vec::with_capacity(n_classes);
    for (name, feats) in class_names.iter().zip(&features) {
        let n = feats.len() as f64;
        let mut mean = [0.0f64; 3];
        for f in feats {
            for d in 0..3 {
                mean[d] += f[d];
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut variance = [0.0f64; 3];
        for f in feats {
            for d in 0..3 {
                let diff = f[d] - mean[d];
                variance[d] += diff * diff;
            }
        }
        let mut floored = false;
        for v in &mut variance {
            *v /= n;
            if *v < cfg.variance_floor {
                *v = cfg.variance_floor;
                floored = true;
            }
        }
        if floored {
            log::warn!("sub-class `{name}`: degenerate variance floored to {}", cfg.variance_floor);
        }
        signatures.push(Signature {
            mean,
            variance,
            prior: n / total,
            score_floor: f64::NEG_INFINITY,
        });
    }

    let mut model = SubClassModel {
        version: MODEL_VERSION,
        color_space: cfg.color_space,
        trained_samples: samples.len(),
        classes: class_names.to_vec(),
        signatures,
    };
    if let Some(q) = cfg.unknown_quantile {
        let mut scores: Vec<Vec<f64>> = vec![Vec::new(); n_classes];
        for s in samples {
            let class = index[s.label.as_str()];
            scores[class].push(model.score(class, &s.stats.features()));
        }
        for (class, mut class_scores) in scores.into_iter().enumerate() {
            class_scores.sort_by(f64::total_cmp);
            let idx = (q * (class_scores.len() - 1) as f64).floor() as usize;
            model.signatures[class].score_floor = class_scores[idx];
        }
    }
    Ok(model)
}

impl SubClassModel {
    /// Log prior plus diagonal Gaussian log-likelihood of `x` under one
    /// class signature.
    pub fn score(&self, class: usize, x: &[f64; 3]) -> f64 {
        let sig = &self.signatures[class];
        let mut s = sig.prior.ln();
        for d in 0..3 {
            let var = sig.variance[d];
            let diff = x[d] - sig.mean[d];
            s += -0.5 * (2.0 * PI * var).ln() - diff * diff / (2.0 * var);
        }
        s
    }

    pub fn label_of(&self, id: u8) -> SubClassLabel {
        SubClassLabel {
            id,
            name: self.classes[id as usize].clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string_pretty(self).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SubClassModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let model: SubClassModel = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if model.version != MODEL_VERSION {
            return Err(Error::Classifier(format!(
                "model version {} unsupported (expected {MODEL_VERSION})",
                model.version
            )));
        }
        if model.classes.len() != model.signatures.len() || model.classes.is_empty() {
            return Err(Error::Classifier("malformed model: class/signature mismatch".into()));
        }
        if model
            .signatures
            .iter()
            .any(|s| s.variance.iter().any(|&v| v.is_nan() || v <= 0.0) || s.prior.is_nan() || s.prior <= 0.0)
        {
            return Err(Error::Classifier("malformed model: non-positive variance or prior".into()));
        }
        Ok(model)
    }
}

/// Outcome of classifying one statistics vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// `None` when the best score fell below the class's floor.
    pub label: Option<SubClassLabel>,
    /// Softmax weight of the winning class over all class scores.
    pub confidence: f64,
    pub best_score: f64,
}

/// Scores `stats` against every signature. Argmax wins; ties go to the
/// lowest class id; a winner scoring under its floor is unknown.
pub fn classify_pool(model: &SubClassModel, stats: &PoolStats) -> Result<Classification> {
    if model.classes.is_empty() {
        return Err(Error::Classifier("model has no classes".into()));
    }
    let x = stats.features();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Classifier("non-finite feature vector".into()));
    }
    let scores: Vec<f64> = (0..model.classes.len())
        .map(|c| model.score(c, &x))
        .collect();
    let mut best = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let max = scores[best];
    let denom: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    let confidence = 1.0 / denom;
    let label = if max < model.signatures[best].score_floor {
        None
    } else {
        Some(model.label_of(best as u8))
    };
    Ok(Classification {
        label,
        confidence,
        best_score: max,
    })
}

/// A labeled color pool, as produced by [`classify_pools`].
#[derive(Debug, Clone)]
pub struct ClassifiedPool {
    pub pool: ColorPool,
    pub stats: PoolStats,
    pub label: Option<SubClassLabel>,
    pub confidence: f64,
}

/// Strategy interface for pool labeling; lets an externally produced label
/// set replace the built-in scorer.
pub trait PoolLabeler {
    fn label_pools(
        &self,
        source_id: &str,
        pools_with_stats: &[(ColorPool, PoolStats)],
    ) -> Result<Vec<(Option<SubClassLabel>, f64)>>;
}

impl PoolLabeler for SubClassModel {
    fn label_pools(
        &self,
        _source_id: &str,
        pools_with_stats: &[(ColorPool, PoolStats)],
    ) -> Result<Vec<(Option<SubClassLabel>, f64)>> {
        pools_with_stats
            .iter()
            .map(|(_, stats)| classify_pool(self, stats).map(|c| (c.label, c.confidence)))
            .collect()
    }
}

/// Labels loaded from a JSON file mapping source id to an ordered list of
/// sub-class names (one per pool, `"unknown"` allowed).
#[derive(Debug, Clone, Deserialize)]
pub struct FileLabels {
    #[serde(flatten)]
    by_source: HashMap<String, Vec<String>>,
    #[serde(skip)]
    class_index: HashMap<String, u8>,
}

impl FileLabels {
    pub fn load(path: impl AsRef<Path>, class_names: &[String]) -> Result<FileLabels> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let by_source: HashMap<String, Vec<String>> =
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let class_index = class_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u8))
            .collect();
        Ok(FileLabels {
            by_source,
            class_index,
        })
    }
}

impl PoolLabeler for FileLabels {
    fn label_pools(
        &self,
        source_id: &str,
        pools_with_stats: &[(ColorPool, PoolStats)],
    ) -> Result<Vec<(Option<SubClassLabel>, f64)>> {
        let names = self.by_source.get(source_id).ok_or_else(|| {
            Error::Classifier(format!("no external labels for `{source_id}`"))
        })?;
        if names.len() != pools_with_stats.len() {
            return Err(Error::Classifier(format!(
                "`{source_id}`: {} labels for {} pools",
                names.len(),
                pools_with_stats.len()
            )));
        }
        names
            .iter()
            .map(|name| {
                if name == "unknown" {
                    Ok((None, 1.0))
                } else {
                    let &id = self.class_index.get(name).ok_or_else(|| {
                        Error::Classifier(format!("external label `{name}` is not a declared sub-class"))
                    })?;
                    Ok((
                        Some(SubClassLabel {
                            id,
                            name: name.clone(),
                        }),
                        1.0,
                    ))
                }
            })
            .collect()
    }
}

/// Labels every pool with a stable ordering matching the input.
pub fn classify_pools(
    labeler: &dyn PoolLabeler,
    pools: Vec<ColorPool>,
    frame: &Frame,
    space: ColorSpace,
    source_id: &str,
) -> Result<Vec<ClassifiedPool>> {
    let roi_total: u64 = pools.iter().map(|p| p.count).sum();
    let with_stats: Vec<(ColorPool, PoolStats)> = pools
        .into_iter()
        .map(|p| {
            let stats = crate::kmeans::pool_stats(&p, frame, space, roi_total)?;
            Ok((p, stats))
        })
        .collect::<Result<_>>()?;
    let labels = labeler.label_pools(source_id, &with_stats)?;
    Ok(with_stats
        .into_iter()
        .zip(labels)
        .map(|((pool, stats), (label, confidence))| ClassifiedPool {
            pool,
            stats,
            label,
            confidence,
        })
        .collect())
}

/// Held-out evaluation: confusion counts (unknown predictions get their own
/// column), per-class precision/recall, and overall accuracy.
#[derive(Debug, Clone, Serialize)]
pub struct ClassifierReport {
    pub classes: Vec<String>,
    /// Rows are true classes; the extra final column counts unknowns.
    pub confusion: Vec<Vec<u64>>,
    pub per_class_precision: Vec<Option<f64>>,
    pub per_class_recall: Vec<Option<f64>>,
    pub mean_accuracy: f64,
    pub samples: u64,
}

pub fn evaluate_classifier(
    model: &SubClassModel,
    samples: &[TrainingSample],
) -> Result<ClassifierReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("classifier evaluation needs samples"));
    }
    let n = model.classes.len();
    let index: HashMap<&str, usize> = model
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut confusion = vec![vec![0u64; n + 1]; n];
    for s in samples {
        let &truth = index.get(s.label.as_str()).ok_or_else(|| {
            Error::Classifier(format!("held-out label `{}` is not in the model", s.label))
        })?;
        let c = classify_pool(model, &s.stats)?;
        match c.label {
            Some(l) => confusion[truth][l.id as usize] += 1,
            None => confusion[truth][n] += 1,
        }
    }
    let total: u64 = confusion.iter().flatten().sum();
    let correct: u64 = (0..n).map(|i| confusion[i][i]).sum();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    for c in 0..n {
        let col: u64 = confusion.iter().map(|row| row[c]).sum();
        let row: u64 = confusion[c].iter().sum();
        precision.push((col > 0).then(|| confusion[c][c] as f64 / col as f64));
        recall.push((row > 0).then(|| confusion[c][c] as f64 / row as f64));
    }
    Ok(ClassifierReport {
        classes: model.classes.clone(),
        confusion,
        per_class_precision: precision,
        per_class_recall: recall,
        mean_accuracy: correct as f64 / total as f64,
        samples: total,
    })
}

// --- training sample ingestion ---

/// CSV rows: `mean_r,mean_g,mean_b,var_r,var_g,var_b,fraction,label`.
pub fn load_samples_csv(path: impl AsRef<Path>) -> Result<Vec<TrainingSample>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;

    #[derive(Deserialize)]
    struct Row {
        mean_r: f64,
        mean_g: f64,
        mean_b: f64,
        var_r: f64,
        var_g: f64,
        var_b: f64,
        fraction: f64,
        label: String,
    }

    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let r = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: format!("row {}: {e}", i + 2),
        })?;
        out.push(TrainingSample {
            stats: PoolStats {
                mean: [r.mean_r, r.mean_g, r.mean_b],
                variance: [r.var_r, r.var_g, r.var_b],
                fraction: r.fraction,
            },
            label: r.label,
        });
    }
    Ok(out)
}

pub fn save_samples_csv(path: impl AsRef<Path>, samples: &[TrainingSample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    w.write_record([
        "mean_r", "mean_g", "mean_b", "var_r", "var_g", "var_b", "fraction", "label",
    ])
    .and_then(|_| {
        for s in samples {
            w.write_record([
                s.stats.mean[0].to_string(),
                s.stats.mean[1].to_string(),
                s.stats.mean[2].to_string(),
                s.stats.variance[0].to_string(),
                s.stats.variance[1].to_string(),
                s.stats.variance[2].to_string(),
                s.stats.fraction.to_string(),
                s.label.clone(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)
    })
    .map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Ingests a directory of labeled crops: `<root>/<label>/*.png`, one
/// statistics vector per crop (fraction fixed at 1).
pub fn load_samples_from_crops(
    root: impl AsRef<Path>,
    space: ColorSpace,
) -> Result<Vec<TrainingSample>> {
    let root = root.as_ref();
    let mut labels: Vec<PathBufLabel> = std::fs::read_dir(root)
        .map_err(|source| Error::Io {
            path: root.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| PathBufLabel {
            label: e.file_name().to_string_lossy().into_owned(),
            dir: e.path(),
        })
        .collect();
    labels.sort_by(|a, b| a.label.cmp(&b.label));

    let mut out = Vec::new();
    for entry in labels {
        let mut files: Vec<_> = std::fs::read_dir(&entry.dir)
            .map_err(|source| Error::Io {
                path: entry.dir.clone(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .map(|e| e.to_string_lossy().to_lowercase() == "png")
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        for file in files {
            let frame = crate::imgio::load_frame(&file)?;
            let ws: Vec<[f64; 3]> = frame.pixels.iter().map(|&p| space.to_working(p)).collect();
            let n = ws.len() as f64;
            let mut mean = [0.0f64; 3];
            for c in &ws {
                for d in 0..3 {
                    mean[d] += c[d];
                }
            }
            for m in &mut mean {
                *m /= n;
            }
            let mut var = [0.0f64; 3];
            for c in &ws {
                for d in 0..3 {
                    let diff = c[d] - mean[d];
                    var[d] += diff * diff;
                }
            }
            for v in &mut var {
                *v /= n;
            }
            out.push(TrainingSample {
                stats: PoolStats {
                    mean,
                    variance: var,
                    fraction: 1.0,
                },
                label: entry.label.clone(),
            });
        }
    }
    Ok(out)
}

struct PathBufLabel {
    label: String,
    dir: std::path::PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: [f64; 3]) -> PoolStats {
        PoolStats {
            mean,
            variance: [0.0; 3],
            fraction: 1.0,
        }
    }

    fn sample(mean: [f64; 3], label: &str) -> TrainingSample {
        TrainingSample {
            stats: stats(mean),
            label: label.into(),
        }
    }

    fn two_class_model_with(cfg: &TrainConfig) -> SubClassModel {
        let names = vec!["low".to_string(), "high".to_string()];
        let samples = vec![
            sample([0.1, 0.1, 0.1], "low"),
            sample([0.2, 0.2, 0.2], "low"),
            sample([0.8, 0.8, 0.8], "high"),
            sample([0.9, 0.9, 0.9], "high"),
        ];
        train(&names, &samples, cfg).unwrap()
    }

    fn two_class_model() -> SubClassModel {
        two_class_model_with(&TrainConfig::default())
    }

    /// Same model with unknown detection disabled, for the pure
    /// argmax/softmax contract checks.
    fn two_class_model_no_floor() -> SubClassModel {
        two_class_model_with(&TrainConfig {
            unknown_quantile: None,
            ..TrainConfig::default()
        })
    }

    #[test]
    fn single_sample_signature_equals_the_sample() {
        let names = vec!["a".to_string(), "b".to_string()];
        let samples = vec![sample([0.3, 0.4, 0.5], "a"), sample([0.9, 0.8, 0.7], "b")];
        let model = train(&names, &samples, &TrainConfig::default()).unwrap();
        assert_eq!(model.signatures[0].mean, [0.3, 0.4, 0.5]);
        assert_eq!(model.signatures[1].mean, [0.9, 0.8, 0.7]);
        // degenerate variance floored
        assert!(model.signatures.iter().all(|s| s.variance.iter().all(|&v| v == 1e-6)));
    }

    #[test]
    fn missing_class_samples_is_an_error() {
        let names = vec!["a".to_string(), "b".to_string()];
        let samples = vec![sample([0.1, 0.1, 0.1], "a")];
        let err = train(&names, &samples, &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("b"));
    }

    #[test]
    fn signatures_match_direct_mean_variance() {
        let mut samples = Vec::new();
        let mut expected_mean = [0.0f64; 3];
        let values = [
            [0.1, 0.2, 0.3],
            [0.2, 0.3, 0.4],
            [0.3, 0.1, 0.2],
        ];
        for v in values {
            samples.push(sample(v, "x"));
            for d in 0..3 {
                expected_mean[d] += v[d] / 3.0;
            }
        }
        samples.push(sample([0.9, 0.9, 0.9], "y"));
        let names = vec!["x".to_string(), "y".to_string()];
        let model = train(&names, &samples, &TrainConfig::default()).unwrap();
        let mut expected_var = [0.0f64; 3];
        for v in values {
            for d in 0..3 {
                expected_var[d] += (v[d] - expected_mean[d]).powi(2) / 3.0;
            }
        }
        for d in 0..3 {
            assert!((model.signatures[0].mean[d] - expected_mean[d]).abs() < 1e-12);
            assert!((model.signatures[0].variance[d] - expected_var[d]).abs() < 1e-12);
        }
        assert!((model.signatures[0].prior - 0.75).abs() < 1e-12);
    }

    #[test]
    fn on_centroid_query_is_confident() {
        let model = two_class_model();
        let c = classify_pool(&model, &stats([0.15, 0.15, 0.15])).unwrap();
        assert_eq!(c.label.as_ref().unwrap().name, "low");
        assert!(c.confidence > 0.9, "confidence {}", c.confidence);
    }

    #[test]
    fn equidistant_query_splits_confidence_and_breaks_ties_low() {
        let model = two_class_model_no_floor();
        let c = classify_pool(&model, &stats([0.5, 0.5, 0.5])).unwrap();
        assert_eq!(c.label.as_ref().unwrap().id, 0);
        assert!((c.confidence - 0.5).abs() < 1e-9, "confidence {}", c.confidence);
    }

    #[test]
    fn labels_match_brute_force_scores() {
        let model = two_class_model();
        let queries: Vec<[f64; 3]> = (0..20)
            .map(|i| {
                let t = i as f64 / 19.0;
                [t, 1.0 - t, t * 0.5]
            })
            .collect();
        for q in queries {
            let c = classify_pool(&model, &stats(q)).unwrap();
            // direct recomputation of every class score
            let direct: Vec<f64> = (0..model.classes.len())
                .map(|class| {
                    let sig = &model.signatures[class];
                    let mut s = sig.prior.ln();
                    for d in 0..3 {
                        s += -0.5 * (2.0 * PI * sig.variance[d]).ln()
                            - (q[d] - sig.mean[d]).powi(2) / (2.0 * sig.variance[d]);
                    }
                    s
                })
                .collect();
            let best = if direct[1] > direct[0] { 1u8 } else { 0u8 };
            assert_eq!(c.label.as_ref().map(|l| l.id).unwrap_or(best), best);
        }
    }

    #[test]
    fn argmax_invariant_under_prior_rescaling() {
        let mut model = two_class_model_no_floor();
        let q = stats([0.3, 0.3, 0.3]);
        let before = classify_pool(&model, &q).unwrap();
        for sig in &mut model.signatures {
            sig.prior *= 7.5;
        }
        let after = classify_pool(&model, &q).unwrap();
        assert_eq!(
            before.label.as_ref().unwrap().id,
            after.label.as_ref().unwrap().id
        );
    }

    #[test]
    fn far_query_is_unknown() {
        let model = two_class_model();
        let c = classify_pool(&model, &stats([120.0, -40.0, 99.0])).unwrap();
        assert!(c.label.is_none());
    }

    #[test]
    fn perfect_model_on_training_set() {
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let samples = vec![
            sample([0.1, 0.1, 0.1], "a"),
            sample([0.12, 0.1, 0.1], "a"),
            sample([0.5, 0.5, 0.5], "b"),
            sample([0.52, 0.5, 0.5], "b"),
            sample([0.9, 0.9, 0.9], "c"),
            sample([0.92, 0.9, 0.9], "c"),
        ];
        let model = train(&names, &samples, &TrainConfig::default()).unwrap();
        let report = evaluate_classifier(&model, &samples).unwrap();
        assert_eq!(report.mean_accuracy, 1.0);
        let row_sums: Vec<u64> = report.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(row_sums, vec![2, 2, 2]);
    }

    #[test]
    fn shuffled_labels_score_near_chance() {
        use rand::prelude::IndexedRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let names: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(32);
        let mut samples = Vec::new();
        for _ in 0..600 {
            let mean = [
                rand::Rng::random_range(&mut rng2, 0.0..1.0),
                rand::Rng::random_range(&mut rng2, 0.0..1.0),
                rand::Rng::random_range(&mut rng2, 0.0..1.0),
            ];
            let label = names.choose(&mut rng).unwrap().clone();
            samples.push(TrainingSample {
                stats: stats(mean),
                label,
            });
        }
        let cfg = TrainConfig {
            unknown_quantile: None,
            ..TrainConfig::default()
        };
        let model = train(&names, &samples, &cfg).unwrap();
        let report = evaluate_classifier(&model, &samples).unwrap();
        assert!(
            (report.mean_accuracy - 0.25).abs() < 0.1,
            "accuracy {} not near chance",
            report.mean_accuracy
        );
    }

    #[test]
    fn model_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let model = two_class_model();
        let path = dir.path().join("model.toml");
        model.save(&path).unwrap();
        let loaded = SubClassModel::load(&path).unwrap();
        assert_eq!(loaded.classes, model.classes);
        assert_eq!(loaded.signatures[0].mean, model.signatures[0].mean);
        assert_eq!(loaded.signatures[1].variance, model.signatures[1].variance);
    }

    #[test]
    fn csv_samples_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        let samples = vec![sample([0.25, 0.5, 0.75], "grass"), sample([0.1, 0.2, 0.3], "mud")];
        save_samples_csv(&path, &samples).unwrap();
        let loaded = load_samples_csv(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].label, "grass");
        assert_eq!(loaded[0].stats.mean, [0.25, 0.5, 0.75]);
    }

    #[test]
    fn classify_pools_on_empty_list_is_empty() {
        let model = two_class_model();
        let frame = crate::mask::Frame::new(1, 1, vec![crate::color::Rgb::BLACK], "f").unwrap();
        let out = classify_pools(&model, Vec::new(), &frame, ColorSpace::Rgb, "f").unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn file_labels_apply_in_pool_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.json");
        std::fs::write(&path, r#"{"img1": ["grass", "unknown"]}"#).unwrap();
        let names = vec!["grass".to_string(), "mud".to_string()];
        let labels = FileLabels::load(&path, &names).unwrap();
        let pools = vec![
            (
                ColorPool {
                    centroid: [0.0; 3],
                    members: crate::mask::BitMask::zeros(1, 1),
                    count: 1,
                    inertia_contribution: 0.0,
                },
                stats([0.0; 3]),
            ),
            (
                ColorPool {
                    centroid: [0.0; 3],
                    members: crate::mask::BitMask::zeros(1, 1),
                    count: 1,
                    inertia_contribution: 0.0,
                },
                stats([0.0; 3]),
            ),
        ];
        let out = labels.label_pools("img1", &pools).unwrap();
        assert_eq!(out[0].0.as_ref().unwrap().name, "grass");
        assert!(out[1].0.is_none());
        assert!(labels.label_pools("other", &pools).is_err());
    }
}
