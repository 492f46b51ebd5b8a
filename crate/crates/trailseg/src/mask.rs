//! Frames, label masks and the per-pixel transforms between them.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::color::Rgb;
use crate::error::{Error, Result};
use crate::parallel;
use crate::schema::{ClassSchema, PoolingMap};

/// An RGB raster in row-major order.
#[derive(Debug, Clone)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Rgb>,
    pub source_id: String,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>, source_id: impl Into<String>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyInput("frame dimensions must be positive"));
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(Error::DimensionMismatch {
                left_w: width,
                left_h: height,
                right_w: pixels.len() as u32,
                right_h: 1,
            });
        }
        Ok(Frame {
            width,
            height,
            pixels,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Whether a mask came from annotation or from a model prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    GroundTruth,
    Prediction,
}

/// Per-pixel class ids bound to a schema. Every id is either a valid class
/// id or the schema's reserved ignore id.
#[derive(Debug, Clone)]
pub struct LabelMask {
    pub width: u32,
    pub height: u32,
    pub ids: Vec<u8>,
    pub schema: Arc<ClassSchema>,
    pub kind: MaskKind,
    pub source_id: String,
}

impl LabelMask {
    /// Wraps a raw id buffer, validating every id against the schema.
    pub fn from_ids(
        width: u32,
        height: u32,
        ids: Vec<u8>,
        schema: Arc<ClassSchema>,
        kind: MaskKind,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if ids.len() != (width as usize) * (height as usize) {
            return Err(Error::DimensionMismatch {
                left_w: width,
                left_h: height,
                right_w: ids.len() as u32,
                right_h: 1,
            });
        }
        let ignore = schema.ignore_id();
        if let Some(&bad) = ids.iter().find(|&&id| id > ignore) {
            return Err(Error::UnknownClassId {
                id: bad,
                schema: schema.name().to_string(),
            });
        }
        Ok(LabelMask {
            width,
            height,
            ids,
            schema,
            kind,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Per-class pixel counts, indexed by class id, with ignore pixels in
    /// the final slot.
    pub fn histogram(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.schema.len() + 1];
        for &id in &self.ids {
            counts[id as usize] += 1;
        }
        counts
    }
}

/// A binary raster; used for RoI masks and cluster membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BitMask {
    pub fn zeros(width: u32, height: u32) -> Self {
        BitMask {
            width,
            height,
            bits: vec![false; (width as usize) * (height as usize)],
        }
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    #[inline]
    pub fn set(&mut self, index: usize) {
        self.bits[index] = true;
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn iter_set(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Result of decoding a color raster against a palette.
#[derive(Debug)]
pub struct DecodedMask {
    pub mask: LabelMask,
    /// Pixels whose color was not in the palette (mapped to the ignore id).
    pub unknown_pixels: u64,
}

/// Maps every pixel color to its class id; off-palette colors (including
/// the configured ignore color) become the reserved ignore id.
pub fn decode_mask(
    width: u32,
    height: u32,
    pixels: &[Rgb],
    schema: Arc<ClassSchema>,
    kind: MaskKind,
    source_id: impl Into<String>,
) -> Result<DecodedMask> {
    if pixels.len() != (width as usize) * (height as usize) {
        return Err(Error::DimensionMismatch {
            left_w: width,
            left_h: height,
            right_w: pixels.len() as u32,
            right_h: 1,
        });
    }
    let lookup: HashMap<Rgb, u8> = schema
        .classes()
        .iter()
        .map(|c| (c.color, c.id))
        .collect();
    let ignore = schema.ignore_id();
    let ignore_color = schema.ignore_color();
    let chunk = parallel::pixel_chunk(width, height);

    let mut ids = vec![0u8; pixels.len()];
    // Annotation rasters are dominated by long runs of one color; a
    // one-entry memo per chunk removes most hash lookups.
    parallel::for_each_chunk_pair(pixels, &mut ids, chunk, |src, dst| {
        let mut memo: Option<(Rgb, u8)> = None;
        for (d, &px) in dst.iter_mut().zip(src) {
            let id = match memo {
                Some((color, id)) if color == px => id,
                _ => {
                    let id = if px == ignore_color {
                        ignore
                    } else {
                        lookup.get(&px).copied().unwrap_or(ignore)
                    };
                    memo = Some((px, id));
                    id
                }
            };
            *d = id;
        }
    });
    let unknown_pixels = parallel::sum_chunks(&ids, chunk, |ids| {
        ids.iter().filter(|&&id| id == ignore).count() as u64
    });

    Ok(DecodedMask {
        mask: LabelMask {
            width,
            height,
            ids,
            schema,
            kind,
            source_id: source_id.into(),
        },
        unknown_pixels,
    })
}

/// Renders a mask back to RGB using the schema palette; ignore pixels take
/// the schema's ignore color.
pub fn encode_mask(mask: &LabelMask) -> Vec<Rgb> {
    let mut palette: Vec<Rgb> = mask.schema.classes().iter().map(|c| c.color).collect();
    palette.push(mask.schema.ignore_color());
    let chunk = parallel::pixel_chunk(mask.width, mask.height);
    let mut out = vec![Rgb::BLACK; mask.ids.len()];
    parallel::for_each_chunk_pair(&mask.ids, &mut out, chunk, |src, dst| {
        for (d, &id) in dst.iter_mut().zip(src) {
            *d = palette[id as usize];
        }
    });
    out
}

/// Applies a pooling map pixel-wise. Ignore pixels stay ignore; raster
/// dimensions are preserved.
pub fn remap_mask(mask: &LabelMask, map: &PoolingMap) -> Result<LabelMask> {
    if !mask.schema.same_as(map.source()) {
        return Err(Error::SchemaMismatch {
            expected: map.source().name().to_string(),
            found: mask.schema.name().to_string(),
        });
    }
    map.ensure_total()?;
    let mut table = map.table().to_vec();
    table.push(map.target().ignore_id()); // source ignore id slot
    let chunk = parallel::pixel_chunk(mask.width, mask.height);
    let mut ids = vec![0u8; mask.ids.len()];
    parallel::for_each_chunk_pair(&mask.ids, &mut ids, chunk, |src, dst| {
        for (d, &id) in dst.iter_mut().zip(src) {
            *d = table[id as usize];
        }
    });
    Ok(LabelMask {
        width: mask.width,
        height: mask.height,
        ids,
        schema: map.target().clone(),
        kind: mask.kind,
        source_id: mask.source_id.clone(),
    })
}

/// Binary RoI extraction: 1 where the mask id equals `class_id`.
/// An empty result is valid and reported through the count.
pub fn extract_roi(mask: &LabelMask, class_id: u8) -> Result<(BitMask, u64)> {
    if !mask.schema.is_valid_id(class_id) {
        return Err(Error::UnknownClassId {
            id: class_id,
            schema: mask.schema.name().to_string(),
        });
    }
    let mut roi = BitMask::zeros(mask.width, mask.height);
    let mut count = 0u64;
    for (bit, &id) in roi.bits.iter_mut().zip(&mask.ids) {
        if id == class_id {
            *bit = true;
            count += 1;
        }
    }
    Ok((roi, count))
}

/// Pixel-fraction histogram over a set of masks sharing one schema.
#[derive(Debug, Clone, Serialize)]
pub struct Distribution {
    pub schema: String,
    pub counts: Vec<u64>,
    /// Fraction of non-ignore pixels per class; sums to 1 when any
    /// non-ignore pixel exists.
    pub fractions: Vec<f64>,
    pub ignored_pixels: u64,
    pub total_pixels: u64,
    pub mask_count: usize,
}

impl Distribution {
    pub fn merge(&mut self, other: &Distribution) {
        debug_assert_eq!(self.schema, other.schema);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.ignored_pixels += other.ignored_pixels;
        self.total_pixels += other.total_pixels;
        self.mask_count += other.mask_count;
        self.recompute_fractions();
    }

    pub fn from_counts(schema: &ClassSchema, counts: Vec<u64>, ignored: u64, masks: usize) -> Self {
        let total: u64 = counts.iter().sum::<u64>() + ignored;
        let mut d = Distribution {
            schema: schema.name().to_string(),
            counts,
            fractions: Vec::new(),
            ignored_pixels: ignored,
            total_pixels: total,
            mask_count: masks,
        };
        d.recompute_fractions();
        d
    }

    fn recompute_fractions(&mut self) {
        let labeled: u64 = self.counts.iter().sum();
        self.fractions = self
            .counts
            .iter()
            .map(|&c| {
                if labeled == 0 {
                    0.0
                } else {
                    c as f64 / labeled as f64
                }
            })
            .collect();
    }

    pub fn fraction_of(&self, schema: &ClassSchema, class: &str) -> Result<f64> {
        let id = schema.id_of(class)?;
        Ok(self.fractions[id as usize])
    }
}

/// Aggregated class distribution over `masks`. Ignore pixels are excluded
/// from the fraction denominator.
pub fn class_distribution(masks: &[&LabelMask]) -> Result<Distribution> {
    let first = masks.first().ok_or(Error::EmptyInput("class_distribution needs at least one mask"))?;
    let schema = &first.schema;
    let mut counts = vec![0u64; schema.len()];
    let mut ignored = 0u64;
    for mask in masks {
        if !mask.schema.same_as(schema) {
            return Err(Error::SchemaMismatch {
                expected: schema.name().to_string(),
                found: mask.schema.name().to_string(),
            });
        }
        let hist = mask.histogram();
        for (c, h) in counts.iter_mut().zip(&hist) {
            *c += h;
        }
        ignored += hist[schema.len()];
    }
    Ok(Distribution::from_counts(schema, counts, ignored, masks.len()))
}
