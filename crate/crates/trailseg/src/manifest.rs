//! Dataset manifests: frame/mask path pairs with split tags.
//!
//! The on-disk form is a CSV file with the header
//! `frame,ground_truth,prediction,split`; the `prediction` column may be
//! empty. Relative paths are resolved against the manifest's directory.
//! A directory-scan fallback pairs files by stem for layouts without a
//! manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" | "validation" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub frame: PathBuf,
    pub ground_truth: PathBuf,
    pub prediction: Option<PathBuf>,
    pub split: Split,
}

impl ManifestEntry {
    /// Stable identifier used for output naming and seed derivation.
    pub fn stem(&self) -> String {
        crate::imgio::stem_of(&self.frame)
    }
}

#[derive(Debug, Clone, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.split).or_insert(0) += 1;
        }
        counts
    }

    pub fn subset(&self, split: Option<Split>) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| split.is_none_or(|s| e.split == s))
            .collect()
    }

    /// Checks that every referenced file exists; returns the missing paths.
    pub fn missing_files(&self) -> Vec<PathBuf> {
        let mut missing = Vec::new();
        for e in &self.entries {
            for p in [Some(&e.frame), Some(&e.ground_truth), e.prediction.as_ref()]
                .into_iter()
                .flatten()
            {
                if !p.exists() {
                    missing.push(p.clone());
                }
            }
        }
        missing
    }

    pub fn ensure_files_exist(&self) -> Result<()> {
        let missing = self.missing_files();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingFiles(missing))
        }
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    frame: String,
    ground_truth: String,
    #[serde(default)]
    prediction: String,
    split: String,
}

/// Loads and validates a CSV manifest. Referenced files must exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let mut entries = Vec::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: format!("row {}: {e}", line + 2),
        })?;
        let split = Split::parse(&row.split).ok_or_else(|| Error::Manifest {
            path: path.to_path_buf(),
            message: format!("row {}: invalid split `{}`", line + 2, row.split),
        })?;
        let resolve = |s: &str| -> PathBuf {
            let p = Path::new(s);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        entries.push(ManifestEntry {
            frame: resolve(&row.frame),
            ground_truth: resolve(&row.ground_truth),
            prediction: (!row.prediction.is_empty()).then(|| resolve(&row.prediction)),
            split,
        });
    }
    let manifest = DatasetManifest { entries };
    manifest.ensure_files_exist()?;
    Ok(manifest)
}

/// Writes a manifest to CSV with paths emitted as given.
pub fn save_manifest(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    w.write_record(["frame", "ground_truth", "prediction", "split"])
        .and_then(|_| {
            for e in &manifest.entries {
                w.write_record([
                    e.frame.to_string_lossy().as_ref(),
                    e.ground_truth.to_string_lossy().as_ref(),
                    e.prediction
                        .as_ref()
                        .map(|p| p.to_string_lossy().into_owned())
                        .unwrap_or_default()
                        .as_str(),
                    &e.split.to_string(),
                ])?;
            }
            w.flush().map_err(csv::Error::from)
        })
        .map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Directory layout used by [`scan_directory`].
#[derive(Debug, Clone)]
pub struct ScanLayout {
    /// Subdirectory with RGB frames.
    pub frames: String,
    /// Subdirectory with ground-truth masks.
    pub ground_truth: String,
    /// Optional subdirectory with prediction masks.
    pub predictions: Option<String>,
    /// File extension to pair on (lowercase, no dot).
    pub extension: String,
    /// Split assigned to every scanned entry.
    pub split: Split,
}

impl Default for ScanLayout {
    fn default() -> Self {
        ScanLayout {
            frames: "frames".into(),
            ground_truth: "gt".into(),
            predictions: None,
            extension: "png".into(),
            split: Split::Test,
        }
    }
}

/// Builds a manifest by pairing files with matching stems across the layout
/// subdirectories. Frames without a ground-truth mask are an error.
pub fn scan_directory(root: impl AsRef<Path>, layout: &ScanLayout) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let frames_dir = root.join(&layout.frames);
    let gt_dir = root.join(&layout.ground_truth);
    let list = |dir: &Path| -> Result<Vec<PathBuf>> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .map(|e| e.to_string_lossy().to_lowercase() == layout.extension)
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        Ok(files)
    };
    let mut entries = Vec::new();
    let mut missing = Vec::new();
    for frame in list(&frames_dir)? {
        let stem = crate::imgio::stem_of(&frame);
        let gt = gt_dir.join(format!("{stem}.{}", layout.extension));
        if !gt.exists() {
            missing.push(gt);
            continue;
        }
        let prediction = layout.predictions.as_ref().and_then(|sub| {
            let p = root.join(sub).join(format!("{stem}.{}", layout.extension));
            p.exists().then_some(p)
        });
        entries.push(ManifestEntry {
            frame,
            ground_truth: gt,
            prediction,
            split: layout.split,
        });
    }
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    Ok(DatasetManifest { entries })
}
