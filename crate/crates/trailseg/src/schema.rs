//! Class taxonomies, palettes and the fine-to-pooled class mapping.
//!
//! Schemas are loaded from editable TOML files so the toolkit stays
//! dataset-agnostic. A schema file looks like:
//!
//! ```toml
//! name = "pooled4"
//! ignore_color = [0, 0, 0]      # optional, default [0, 0, 0]
//!
//! [[classes]]
//! name = "sky"
//! color = [135, 206, 235]
//!
//! # Optional: maps this schema's classes onto a target schema, by name.
//! [pooling]
//! sky = "sky"
//! ```
//!
//! Class ids are positions in the `classes` list. Every schema additionally
//! reserves one ignore id (equal to `len()`): mask pixels whose color is not
//! in the palette decode to it, and it is excluded from metrics.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::color::Rgb;
use crate::error::{Error, Result};

/// Largest number of classes a schema may declare; keeps ids (including the
/// reserved ignore id) within `u8`.
pub const MAX_CLASSES: usize = 255;

/// One class: its name, palette color and id (position in the schema).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub color: Rgb,
    pub id: u8,
}

/// An ordered, immutable class taxonomy with a bijective color palette.
#[derive(Debug, Clone)]
pub struct ClassSchema {
    name: String,
    classes: Vec<ClassDef>,
    ignore_color: Rgb,
    by_color: HashMap<Rgb, u8>,
    by_name: HashMap<String, u8>,
}

impl ClassSchema {
    /// Builds a schema from `(name, color)` pairs, checking the invariants:
    /// unique names, unique colors, ignore color distinct from the palette.
    pub fn new(
        name: impl Into<String>,
        classes: Vec<(String, Rgb)>,
        ignore_color: Rgb,
    ) -> Result<Self> {
        let name = name.into();
        if classes.len() > MAX_CLASSES {
            return Err(Error::SchemaTooLarge {
                schema: name,
                count: classes.len(),
                max: MAX_CLASSES,
            });
        }
        let mut by_color = HashMap::with_capacity(classes.len());
        let mut by_name = HashMap::with_capacity(classes.len());
        let mut defs: Vec<ClassDef> = Vec::with_capacity(classes.len());
        for (id, (class_name, color)) in classes.into_iter().enumerate() {
            let id = id as u8;
            if by_name.insert(class_name.clone(), id).is_some() {
                return Err(Error::DuplicateClassName {
                    schema: name,
                    name: class_name,
                });
            }
            if let Some(&prev) = by_color.get(&color) {
                return Err(Error::DuplicateClassColor {
                    schema: name,
                    first: defs[prev as usize].name.clone(),
                    second: class_name,
                    color: color.0,
                });
            }
            if color == ignore_color {
                return Err(Error::IgnoreColorCollision {
                    schema: name,
                    class: class_name,
                    color: color.0,
                });
            }
            by_color.insert(color, id);
            defs.push(ClassDef {
                name: class_name,
                color,
                id,
            });
        }
        Ok(ClassSchema {
            name,
            classes: defs,
            ignore_color,
            by_color,
            by_name,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Arc<ClassSchema>> {
        let cfg = SchemaConfig::load(path)?;
        cfg.into_schema().map(Arc::new)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassDef] {
        &self.classes
    }

    /// The reserved ignore/void id: one past the last class.
    pub fn ignore_id(&self) -> u8 {
        self.classes.len() as u8
    }

    /// Color used when rendering ignore pixels.
    pub fn ignore_color(&self) -> Rgb {
        self.ignore_color
    }

    pub fn is_valid_id(&self, id: u8) -> bool {
        (id as usize) < self.classes.len()
    }

    pub fn class(&self, id: u8) -> Result<&ClassDef> {
        self.classes
            .get(id as usize)
            .ok_or_else(|| Error::UnknownClassId {
                id,
                schema: self.name.clone(),
            })
    }

    pub fn id_of(&self, name: &str) -> Result<u8> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownClassName {
                name: name.to_string(),
                schema: self.name.clone(),
            })
    }

    /// Class id for a palette color; `None` for off-palette colors
    /// (including the ignore color).
    pub fn id_of_color(&self, color: Rgb) -> Option<u8> {
        self.by_color.get(&color).copied()
    }

    /// Render color for a class id, with the ignore id mapped to the
    /// configured ignore color.
    pub fn color_of(&self, id: u8) -> Result<Rgb> {
        if id == self.ignore_id() {
            Ok(self.ignore_color)
        } else {
            Ok(self.class(id)?.color)
        }
    }

    /// Cheap identity check used when binding masks and matrices together.
    pub fn same_as(&self, other: &ClassSchema) -> bool {
        self.name == other.name && self.classes.len() == other.classes.len()
    }
}

/// Total mapping from every source class id to a target class id.
#[derive(Debug, Clone)]
pub struct PoolingMap {
    source: Arc<ClassSchema>,
    target: Arc<ClassSchema>,
    /// Indexed by source class id.
    mapping: Vec<u8>,
}

impl PoolingMap {
    /// Builds a map from `(source_class_name -> target_class_name)` pairs.
    /// Unmapped source classes are permitted here so that [`validate`] can
    /// report them; operations that apply the map require totality via
    /// [`ensure_total`].
    ///
    /// [`validate`]: PoolingMap::validate
    /// [`ensure_total`]: PoolingMap::ensure_total
    pub fn new(
        source: Arc<ClassSchema>,
        target: Arc<ClassSchema>,
        by_name: &HashMap<String, String>,
    ) -> Result<Self> {
        let mut mapping = vec![u8::MAX; source.len()];
        for (src_name, tgt_name) in by_name {
            let src_id = source
                .id_of(src_name)
                .map_err(|_| Error::UnknownPoolingSource {
                    schema: source.name().to_string(),
                    name: src_name.clone(),
                })?;
            let tgt_id = target
                .id_of(tgt_name)
                .map_err(|_| Error::UnknownPoolingTarget {
                    schema: target.name().to_string(),
                    name: tgt_name.clone(),
                })?;
            mapping[src_id as usize] = tgt_id;
        }
        Ok(PoolingMap {
            source,
            target,
            mapping,
        })
    }

    pub fn is_total(&self) -> bool {
        self.mapping.iter().all(|&t| t != u8::MAX)
    }

    /// Errors with the list of unmapped source classes unless the map is a
    /// total function.
    pub fn ensure_total(&self) -> Result<()> {
        let missing: Vec<String> = self
            .mapping
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == u8::MAX)
            .map(|(id, _)| self.source.classes()[id].name.clone())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::IncompletePooling {
                schema: self.source.name().to_string(),
                missing,
            })
        }
    }

    /// Loads a pooling map from a schema config file carrying a `[pooling]`
    /// table, resolved against a separately loaded target schema.
    pub fn load(source_path: impl AsRef<Path>, target: Arc<ClassSchema>) -> Result<Self> {
        let path = source_path.as_ref();
        let cfg = SchemaConfig::load(path)?;
        let pooling = cfg.pooling.clone().ok_or_else(|| Error::MissingPoolingTable {
            path: path.to_path_buf(),
        })?;
        let source = Arc::new(cfg.into_schema()?);
        PoolingMap::new(source, target, &pooling)
    }

    pub fn source(&self) -> &Arc<ClassSchema> {
        &self.source
    }

    pub fn target(&self) -> &Arc<ClassSchema> {
        &self.target
    }

    /// Pooled class id for a source class id. The source ignore id is
    /// preserved as the target ignore id.
    pub fn pool_label(&self, source_id: u8) -> Result<u8> {
        if source_id == self.source.ignore_id() {
            return Ok(self.target.ignore_id());
        }
        match self.mapping.get(source_id as usize).copied() {
            Some(t) if t != u8::MAX => Ok(t),
            _ => Err(Error::UnknownClassId {
                id: source_id,
                schema: self.source.name().to_string(),
            }),
        }
    }

    /// Raw id table indexed by source id; used by the pixel loops.
    pub(crate) fn table(&self) -> &[u8] {
        &self.mapping
    }

    /// Summarizes the map: how many source classes land in each target
    /// bucket and which source classes are unmapped.
    pub fn validate(&self) -> PoolingReport {
        let mut buckets = vec![PoolingBucket::default(); self.target.len()];
        for (b, class) in buckets.iter_mut().zip(self.target.classes()) {
            b.target = class.name.clone();
        }
        let mut unmapped = Vec::new();
        for class in self.source.classes() {
            let t = self.mapping[class.id as usize];
            if t == u8::MAX {
                unmapped.push(class.name.clone());
            } else {
                let bucket = &mut buckets[t as usize];
                bucket.count += 1;
                bucket.sources.push(class.name.clone());
            }
        }
        PoolingReport {
            source: self.source.name().to_string(),
            target: self.target.name().to_string(),
            source_classes: self.source.len(),
            buckets,
            unmapped,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PoolingBucket {
    pub target: String,
    pub count: usize,
    pub sources: Vec<String>,
}

/// Outcome of [`PoolingMap::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct PoolingReport {
    pub source: String,
    pub target: String,
    pub source_classes: usize,
    pub buckets: Vec<PoolingBucket>,
    pub unmapped: Vec<String>,
}

impl PoolingReport {
    pub fn bucket_count(&self, target_class: &str) -> Option<usize> {
        self.buckets
            .iter()
            .find(|b| b.target == target_class)
            .map(|b| b.count)
    }
}

// --- config file format ---

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub color: [u8; 3],
}

/// On-disk schema config. `pooling` is present only for files that also
/// define a fine-to-pooled mapping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub name: String,
    #[serde(default = "default_ignore_color")]
    pub ignore_color: [u8; 3],
    pub classes: Vec<ClassEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooling: Option<HashMap<String, String>>,
}

fn default_ignore_color() -> [u8; 3] {
    [0, 0, 0]
}

impl SchemaConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn into_schema(self) -> Result<ClassSchema> {
        ClassSchema::new(
            self.name,
            self.classes
                .into_iter()
                .map(|c| (c.name, Rgb(c.color)))
                .collect(),
            Rgb(self.ignore_color),
        )
    }
}

/// Loads a schema from a config file, ignoring any `[pooling]` table.
pub fn load_schema(path: impl AsRef<Path>) -> Result<Arc<ClassSchema>> {
    ClassSchema::load(path)
}
