//! Compositing: sub-class overlays appended onto the 4-class render.

use crate::color::Rgb;
use crate::error::{Error, Result};
use crate::classify::ClassifiedPool;
use crate::mask::{encode_mask, BitMask, Frame, LabelMask};
use crate::schema::ClassSchema;

/// Final annotated output: the pooled base, one overlay per labeled pool,
/// and the rendered raster.
#[derive(Debug, Clone)]
pub struct CompositeMask {
    pub width: u32,
    pub height: u32,
    /// `(sub-class id, member mask)` for every pool with a known label.
    pub overlays: Vec<(u8, BitMask)>,
    pub rendered: Vec<Rgb>,
}

/// Recolors the traversable pixels of `base` by their pool's sub-class
/// color. Pools labeled unknown keep the base traversable color; all other
/// classes render untouched.
///
/// Errors when an overlay pixel falls outside the traversable region or
/// two pools claim the same pixel - both indicate a pipeline wiring bug.
pub fn compose(
    base: &LabelMask,
    classified: &[ClassifiedPool],
    subclass_schema: &ClassSchema,
    traversable_id: u8,
) -> Result<CompositeMask> {
    let mut rendered = encode_mask(base);
    let mut claimed = vec![false; base.len()];
    let mut overlays = Vec::new();
    for cp in classified {
        if cp.pool.members.width != base.width || cp.pool.members.height != base.height {
            return Err(Error::DimensionMismatch {
                left_w: base.width,
                left_h: base.height,
                right_w: cp.pool.members.width,
                right_h: cp.pool.members.height,
            });
        }
        for i in cp.pool.members.iter_set() {
            if base.ids[i] != traversable_id {
                return Err(Error::OverlayOutsideRoi { index: i });
            }
            if claimed[i] {
                return Err(Error::OverlappingOverlays { index: i });
            }
            claimed[i] = true;
        }
        let Some(label) = &cp.label else { continue };
        let color = subclass_schema
            .classes()
            .iter()
            .find(|c| c.name == label.name)
            .ok_or_else(|| Error::UnknownClassName {
                name: label.name.clone(),
                schema: subclass_schema.name().to_string(),
            })?
            .color;
        for i in cp.pool.members.iter_set() {
            rendered[i] = color;
        }
        overlays.push((
            subclass_schema.id_of(&label.name)?,
            cp.pool.members.clone(),
        ));
    }
    Ok(CompositeMask {
        width: base.width,
        height: base.height,
        overlays,
        rendered,
    })
}

/// Per-pixel linear blend of the composite over the source frame.
/// `alpha = 0` returns the frame bit-exactly, `alpha = 1` the render;
/// intermediate values round half-up per channel.
pub fn overlay_on_frame(composite: &CompositeMask, frame: &Frame, alpha: f64) -> Result<Vec<Rgb>> {
    if composite.width != frame.width || composite.height != frame.height {
        return Err(Error::DimensionMismatch {
            left_w: frame.width,
            left_h: frame.height,
            right_w: composite.width,
            right_h: composite.height,
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(frame
        .pixels
        .iter()
        .zip(&composite.rendered)
        .map(|(f, m)| {
            let mut out = [0u8; 3];
            for d in 0..3 {
                let v = alpha * m.0[d] as f64 + (1.0 - alpha) * f.0[d] as f64;
                out[d] = v.round() as u8;
            }
            Rgb(out)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::SubClassLabel;
    use crate::kmeans::{ColorPool, PoolStats};
    use crate::mask::MaskKind;
    use crate::schema::ClassSchema;
    use std::sync::Arc;

    fn pooled() -> Arc<ClassSchema> {
        Arc::new(
            ClassSchema::new(
                "pooled",
                vec![
                    ("sky".into(), Rgb([1, 1, 1])),
                    ("traversable".into(), Rgb([2, 2, 2])),
                    ("obstacle".into(), Rgb([3, 3, 3])),
                ],
                Rgb::BLACK,
            )
            .unwrap(),
        )
    }

    fn subclasses() -> ClassSchema {
        ClassSchema::new(
            "subs",
            vec![
                ("grass".into(), Rgb([10, 20, 30])),
                ("mud".into(), Rgb([40, 50, 60])),
            ],
            Rgb::BLACK,
        )
        .unwrap()
    }

    fn pool_over(indices: &[usize], w: u32, h: u32) -> ColorPool {
        let mut members = BitMask::zeros(w, h);
        for &i in indices {
            members.set(i);
        }
        ColorPool {
            centroid: [0.0; 3],
            count: indices.len() as u64,
            inertia_contribution: 0.0,
            members,
        }
    }

    fn classified(pool: ColorPool, label: Option<(u8, &str)>) -> ClassifiedPool {
        ClassifiedPool {
            pool,
            stats: PoolStats {
                mean: [0.0; 3],
                variance: [0.0; 3],
                fraction: 1.0,
            },
            label: label.map(|(id, name)| SubClassLabel {
                id,
                name: name.into(),
            }),
            confidence: 1.0,
        }
    }

    fn base_mask() -> LabelMask {
        // 4x2: top row sky/trav/trav/obstacle, bottom row all traversable
        LabelMask::from_ids(
            4,
            2,
            vec![0, 1, 1, 2, 1, 1, 1, 1],
            pooled(),
            MaskKind::Prediction,
            "t",
        )
        .unwrap()
    }

    #[test]
    fn no_pools_renders_the_base() {
        let base = base_mask();
        let out = compose(&base, &[], &subclasses(), 1).unwrap();
        assert_eq!(out.rendered, encode_mask(&base));
        assert!(out.overlays.is_empty());
    }

    #[test]
    fn single_pool_recolors_all_traversable() {
        let base = base_mask();
        let trav: Vec<usize> = base
            .ids
            .iter()
            .enumerate()
            .filter_map(|(i, &id)| (id == 1).then_some(i))
            .collect();
        let cp = classified(pool_over(&trav, 4, 2), Some((0, "grass")));
        let out = compose(&base, &[cp], &subclasses(), 1).unwrap();
        for (i, px) in out.rendered.iter().enumerate() {
            if base.ids[i] == 1 {
                assert_eq!(*px, Rgb([10, 20, 30]));
            } else {
                assert_eq!(*px, encode_mask(&base)[i]);
            }
        }
    }

    #[test]
    fn unknown_pool_keeps_base_color() {
        let base = base_mask();
        let cp = classified(pool_over(&[1, 2], 4, 2), None);
        let out = compose(&base, &[cp], &subclasses(), 1).unwrap();
        assert_eq!(out.rendered, encode_mask(&base));
    }

    #[test]
    fn overlay_outside_roi_is_a_wiring_bug() {
        let base = base_mask();
        let cp = classified(pool_over(&[0], 4, 2), Some((0, "grass"))); // pixel 0 is sky
        assert!(matches!(
            compose(&base, &[cp], &subclasses(), 1),
            Err(Error::OverlayOutsideRoi { index: 0 })
        ));
    }

    #[test]
    fn overlapping_pools_are_rejected() {
        let base = base_mask();
        let a = classified(pool_over(&[1, 2], 4, 2), Some((0, "grass")));
        let b = classified(pool_over(&[2, 4], 4, 2), Some((1, "mud")));
        assert!(matches!(
            compose(&base, &[a, b], &subclasses(), 1),
            Err(Error::OverlappingOverlays { index: 2 })
        ));
    }

    #[test]
    fn blend_endpoints_are_exact() {
        let base = base_mask();
        let out = compose(&base, &[], &subclasses(), 1).unwrap();
        let frame = Frame::new(
            4,
            2,
            (0..8).map(|i| Rgb([i as u8 * 10, 7, 200])).collect(),
            "f",
        )
        .unwrap();
        assert_eq!(overlay_on_frame(&out, &frame, 0.0).unwrap(), frame.pixels);
        assert_eq!(overlay_on_frame(&out, &frame, 1.0).unwrap(), out.rendered);
    }

    #[test]
    fn blend_midpoint_rounds_half_up() {
        let schema = Arc::new(
            ClassSchema::new("one", vec![("x".into(), Rgb([255, 0, 100]))], Rgb::BLACK).unwrap(),
        );
        let base = LabelMask::from_ids(1, 1, vec![0], schema, MaskKind::Prediction, "p").unwrap();
        let out = compose(&base, &[], &subclasses(), 0).unwrap();
        let frame = Frame::new(1, 1, vec![Rgb([10, 20, 30])], "f").unwrap();
        let blended = overlay_on_frame(&out, &frame, 0.5).unwrap();
        // (10+255)/2 = 132.5 -> 133, (20+0)/2 = 10, (30+100)/2 = 65
        assert_eq!(blended[0], Rgb([133, 10, 65]));
    }
}
