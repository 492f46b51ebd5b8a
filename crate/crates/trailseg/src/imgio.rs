//! PNG input/output for frames and label masks.
//!
//! Masks are read either as 8-bit RGB color rasters (the datasets' native
//! annotation form) or, as a fast path, as 8-bit single-channel rasters
//! whose pixel values are class ids directly.

use std::path::Path;
use std::sync::Arc;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::color::Rgb;
use crate::error::{Error, Result};
use crate::mask::{decode_mask, DecodedMask, Frame, LabelMask, MaskKind};
use crate::schema::ClassSchema;

/// Reads and decompresses an image file without interpreting it.
pub fn read_image(path: impl AsRef<Path>) -> Result<DynamicImage> {
    let path = path.as_ref();
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn open(path: &Path) -> Result<DynamicImage> {
    read_image(path)
}

pub fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

/// Loads an RGB frame; other color types are converted.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    frame_from_image(open(path)?, stem_of(path))
}

pub fn frame_from_image(img: DynamicImage, source_id: String) -> Result<Frame> {
    let img = img.to_rgb8();
    let (width, height) = img.dimensions();
    let pixels = img
        .pixels()
        .map(|p| Rgb([p.0[0], p.0[1], p.0[2]]))
        .collect();
    Frame::new(width, height, pixels, source_id)
}

/// Loads a mask file and decodes it against `schema`.
///
/// Single-channel images take the id fast path (pixel value = class id;
/// out-of-range values become ignore). Everything else is decoded by
/// palette color.
pub fn load_mask(
    path: impl AsRef<Path>,
    schema: Arc<ClassSchema>,
    kind: MaskKind,
) -> Result<DecodedMask> {
    let path = path.as_ref();
    let img = open(path)?;
    decode_image(img, schema, kind, stem_of(path))
}

/// Decodes an already-loaded image against `schema`; see [`load_mask`].
pub fn decode_image(
    img: DynamicImage,
    schema: Arc<ClassSchema>,
    kind: MaskKind,
    source_id: String,
) -> Result<DecodedMask> {
    match img {
        DynamicImage::ImageLuma8(gray) => {
            let (width, height) = gray.dimensions();
            let ignore = schema.ignore_id();
            let mut unknown = 0u64;
            let ids: Vec<u8> = gray
                .pixels()
                .map(|p| {
                    let v = p.0[0];
                    if schema.is_valid_id(v) || v == ignore {
                        v
                    } else {
                        unknown += 1;
                        ignore
                    }
                })
                .collect();
            let mask = LabelMask::from_ids(width, height, ids, schema, kind, source_id)?;
            Ok(DecodedMask {
                mask,
                unknown_pixels: unknown,
            })
        }
        other => {
            let rgb = other.to_rgb8();
            let (width, height) = rgb.dimensions();
            let pixels: Vec<Rgb> = rgb
                .pixels()
                .map(|p| Rgb([p.0[0], p.0[1], p.0[2]]))
                .collect();
            decode_mask(width, height, &pixels, schema, kind, source_id)
        }
    }
}

/// Writes an RGB raster as a PNG.
pub fn save_rgb(path: impl AsRef<Path>, width: u32, height: u32, pixels: &[Rgb]) -> Result<()> {
    let path = path.as_ref();
    let mut img = RgbImage::new(width, height);
    for (dst, src) in img.pixels_mut().zip(pixels) {
        dst.0 = src.0;
    }
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a mask as a single-channel id PNG (the fast-path form).
pub fn save_ids(path: impl AsRef<Path>, mask: &LabelMask) -> Result<()> {
    let path = path.as_ref();
    let img = GrayImage::from_raw(mask.width, mask.height, mask.ids.clone())
        .expect("id buffer length matches dimensions");
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::encode_mask;

    fn schema() -> Arc<ClassSchema> {
        Arc::new(
            ClassSchema::new(
                "s",
                vec![
                    ("a".into(), Rgb([200, 0, 0])),
                    ("b".into(), Rgb([0, 200, 0])),
                ],
                Rgb::BLACK,
            )
            .unwrap(),
        )
    }

    #[test]
    fn color_mask_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema();
        let ids = vec![0u8, 1, 1, 0, 2, 2];
        let mask = LabelMask::from_ids(3, 2, ids.clone(), s.clone(), MaskKind::GroundTruth, "t").unwrap();
        let rgb = encode_mask(&mask);
        let path = dir.path().join("m.png");
        save_rgb(&path, 3, 2, &rgb).unwrap();
        let loaded = load_mask(&path, s, MaskKind::GroundTruth).unwrap();
        assert_eq!(loaded.mask.ids, ids);
        assert_eq!(loaded.mask.source_id, "m");
    }

    #[test]
    fn id_mask_fast_path() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema();
        let ids = vec![0u8, 1, 2, 9]; // 9 is out of range -> ignore
        let path = dir.path().join("ids.png");
        let img = GrayImage::from_raw(2, 2, ids).unwrap();
        img.save(&path).unwrap();
        let loaded = load_mask(&path, s.clone(), MaskKind::Prediction).unwrap();
        assert_eq!(loaded.mask.ids, vec![0, 1, 2, 2]);
        assert_eq!(loaded.unknown_pixels, 1);
    }
}
