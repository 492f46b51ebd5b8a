//! Synthetic frames, masks and fixtures for tests and benchmarks.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::color::Rgb;
use crate::mask::{BitMask, Frame, LabelMask, MaskKind};
use crate::schema::ClassSchema;

/// Region of the three-band fixture a pixel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandRegion {
    Sky,
    /// Traversable, with the band index (0..3).
    Band(usize),
    Obstacle,
    NonTraversable,
}

/// A deterministic end-to-end fixture: a frame whose traversable region is
/// three vertical color bands, plus the matching 4-class mask.
///
/// Geometry (60x48): rows 0..12 sky; rows 40..48 non-traversable; within
/// rows 12..40, columns 48..60 are obstacle and columns 0..48 split into
/// three 16-wide traversable bands.
pub struct ThreeBandFixture {
    pub frame: Frame,
    pub pooled_mask: LabelMask,
    pub pooled_schema: Arc<ClassSchema>,
    pub band_colors: [Rgb; 3],
    pub band_labels: [&'static str; 3],
    pub traversable_id: u8,
}

pub const THREE_BAND_WIDTH: u32 = 60;
pub const THREE_BAND_HEIGHT: u32 = 48;

impl ThreeBandFixture {
    pub fn region_of(x: u32, y: u32) -> BandRegion {
        if y < 12 {
            BandRegion::Sky
        } else if y >= 40 {
            BandRegion::NonTraversable
        } else if x >= 48 {
            BandRegion::Obstacle
        } else {
            BandRegion::Band((x / 16) as usize)
        }
    }

    pub fn build(pooled_schema: Arc<ClassSchema>) -> crate::error::Result<ThreeBandFixture> {
        let band_colors = [Rgb([60, 180, 60]), Rgb([110, 70, 40]), Rgb([70, 130, 200])];
        let band_labels = ["grass", "mud", "puddle"];
        let sky_px = Rgb([170, 210, 240]);
        let obstacle_px = Rgb([40, 40, 45]);
        let nontrav_px = Rgb([150, 60, 50]);

        let sky = pooled_schema.id_of("sky")?;
        let traversable = pooled_schema.id_of("traversable")?;
        let non_traversable = pooled_schema.id_of("non_traversable")?;
        let obstacle = pooled_schema.id_of("obstacle")?;

        let (w, h) = (THREE_BAND_WIDTH, THREE_BAND_HEIGHT);
        let mut pixels = Vec::with_capacity((w * h) as usize);
        let mut ids = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                let (px, id) = match Self::region_of(x, y) {
                    BandRegion::Sky => (sky_px, sky),
                    BandRegion::NonTraversable => (nontrav_px, non_traversable),
                    BandRegion::Obstacle => (obstacle_px, obstacle),
                    BandRegion::Band(b) => (band_colors[b], traversable),
                };
                pixels.push(px);
                ids.push(id);
            }
        }
        Ok(ThreeBandFixture {
            frame: Frame::new(w, h, pixels, "three_band")?,
            pooled_mask: LabelMask::from_ids(
                w,
                h,
                ids,
                pooled_schema.clone(),
                MaskKind::Prediction,
                "three_band",
            )?,
            pooled_schema,
            band_colors,
            band_labels,
            traversable_id: traversable,
        })
    }

    /// Training samples matching the band colors, one tight cluster per
    /// band label (working space: normalized RGB).
    pub fn training_samples(&self) -> Vec<crate::classify::TrainingSample> {
        let mut samples = Vec::new();
        for (color, label) in self.band_colors.iter().zip(self.band_labels) {
            let base = crate::color::ColorSpace::Rgb.to_working(*color);
            for delta in [-0.01f64, 0.0, 0.01] {
                samples.push(crate::classify::TrainingSample {
                    stats: crate::kmeans::PoolStats {
                        mean: [base[0] + delta, base[1] + delta, base[2] - delta],
                        variance: [1e-4; 3],
                        fraction: 1.0 / 3.0,
                    },
                    label: label.to_string(),
                });
            }
        }
        samples
    }
}

/// Frame of uniformly random palette colors.
pub fn random_frame(rng: &mut ChaCha8Rng, width: u32, height: u32, palette: &[Rgb]) -> Frame {
    let pixels = (0..(width as usize) * (height as usize))
        .map(|_| palette[rng.random_range(0..palette.len())])
        .collect();
    Frame::new(width, height, pixels, "random").expect("positive dimensions")
}

/// Random binary mask with at least one set bit.
pub fn random_roi(rng: &mut ChaCha8Rng, width: u32, height: u32) -> BitMask {
    let mut roi = BitMask::zeros(width, height);
    for b in roi.bits.iter_mut() {
        *b = rng.random_bool(0.5);
    }
    if roi.count_ones() == 0 {
        let i = rng.random_range(0..roi.bits.len());
        roi.bits[i] = true;
    }
    roi
}

/// Random mask over a schema; `include_ignore` allows the ignore id too.
pub fn random_mask(
    rng: &mut ChaCha8Rng,
    schema: &Arc<ClassSchema>,
    width: u32,
    height: u32,
    include_ignore: bool,
) -> LabelMask {
    let hi = schema.len() as u8 + u8::from(include_ignore);
    let ids = (0..(width as usize) * (height as usize))
        .map(|_| rng.random_range(0..hi))
        .collect();
    LabelMask::from_ids(width, height, ids, schema.clone(), MaskKind::GroundTruth, "random")
        .expect("ids in range")
}

/// Terrain-like synthetic content at a chosen resolution: a fine-schema
/// mask (sky / grass / tree / bush / dirt zones) and a frame whose colors
/// vary with quantized noise, so clustering sees realistic duplicate
/// statistics.
pub struct BenchScene {
    pub frame: Frame,
    pub fine_ids: Vec<u8>,
}

pub fn bench_scene(
    rng: &mut ChaCha8Rng,
    fine: &Arc<ClassSchema>,
    width: u32,
    height: u32,
) -> crate::error::Result<BenchScene> {
    let sky = fine.id_of("sky")?;
    let grass = fine.id_of("grass")?;
    let tree = fine.id_of("tree")?;
    let bush = fine.id_of("bush")?;
    let dirt = fine.id_of("dirt")?;

    let horizon = height / 4;
    let tree_edge = width / 6;
    let mut ids = Vec::with_capacity((width * height) as usize);
    let mut pixels = Vec::with_capacity((width * height) as usize);
    for y in 0..height {
        for x in 0..width {
            let (id, base) = if y < horizon {
                (sky, [165u8, 200, 235])
            } else if x < tree_edge {
                (tree, [30, 90, 35])
            } else if x >= width - tree_edge {
                (bush, [90, 120, 60])
            } else if (x / 40 + y / 40) % 5 == 0 {
                (dirt, [120, 90, 55])
            } else {
                (grass, [70, 140, 50])
            };
            // +-12 quantized jitter keeps the distinct-color count moderate
            let jitter = (rng.random_range(0..7) * 4) as i16 - 12;
            let px = Rgb([
                (base[0] as i16 + jitter).clamp(0, 255) as u8,
                (base[1] as i16 + jitter).clamp(0, 255) as u8,
                (base[2] as i16 + jitter).clamp(0, 255) as u8,
            ]);
            ids.push(id);
            pixels.push(px);
        }
    }
    Ok(BenchScene {
        frame: Frame::new(width, height, pixels, "scene")?,
        fine_ids: ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fixture_regions_cover_the_raster() {
        let schema = crate::schema::load_schema(
            concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/pooled.toml"),
        )
        .unwrap();
        let fx = ThreeBandFixture::build(schema).unwrap();
        assert_eq!(fx.frame.len(), fx.pooled_mask.len());
        let (roi, count) = crate::mask::extract_roi(&fx.pooled_mask, fx.traversable_id).unwrap();
        assert_eq!(count, 48 * 28);
        assert_eq!(roi.count_ones(), count);
    }

    #[test]
    fn bench_scene_decodes_cleanly() {
        let fine = crate::schema::load_schema(
            concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/rellis3d.toml"),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scene = bench_scene(&mut rng, &fine, 128, 80).unwrap();
        assert_eq!(scene.fine_ids.len(), 128 * 80);
        assert!(scene.fine_ids.iter().all(|&id| fine.is_valid_id(id)));
    }
}
