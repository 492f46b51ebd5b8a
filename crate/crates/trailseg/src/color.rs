//! Color primitives and the working color spaces used by clustering.

use serde::{Deserialize, Serialize};

/// An 8-bit RGB triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const BLACK: Rgb = Rgb([0, 0, 0]);

    #[inline]
    pub fn r(&self) -> u8 {
        self.0[0]
    }

    #[inline]
    pub fn g(&self) -> u8 {
        self.0[1]
    }

    #[inline]
    pub fn b(&self) -> u8 {
        self.0[2]
    }

    /// Packs the triple into the low 24 bits of a `u32`. Lexicographic order
    /// on the packed value matches lexicographic order on `[r, g, b]`.
    #[inline]
    pub fn packed(&self) -> u32 {
        ((self.0[0] as u32) << 16) | ((self.0[1] as u32) << 8) | self.0[2] as u32
    }

    #[inline]
    pub fn from_packed(v: u32) -> Rgb {
        Rgb([(v >> 16) as u8, (v >> 8) as u8, v as u8])
    }
}

impl From<[u8; 3]> for Rgb {
    fn from(c: [u8; 3]) -> Self {
        Rgb(c)
    }
}

/// Color space in which clustering and classification operate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    /// sRGB channels normalized to `[0, 1]`.
    #[default]
    Rgb,
    /// CIELAB (D65), L in `[0, 100]`, a/b roughly `[-128, 127]`.
    Lab,
}

impl ColorSpace {
    /// Converts an 8-bit RGB triple into working-space coordinates.
    pub fn to_working(self, rgb: Rgb) -> [f64; 3] {
        match self {
            ColorSpace::Rgb => [
                rgb.0[0] as f64 / 255.0,
                rgb.0[1] as f64 / 255.0,
                rgb.0[2] as f64 / 255.0,
            ],
            ColorSpace::Lab => lab_from_rgb(rgb),
        }
    }
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB -> CIELAB under the D65 reference white.
pub fn lab_from_rgb(rgb: Rgb) -> [f64; 3] {
    let r = srgb_to_linear(rgb.0[0] as f64 / 255.0);
    let g = srgb_to_linear(rgb.0[1] as f64 / 255.0);
    let b = srgb_to_linear(rgb.0[2] as f64 / 255.0);

    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;

    // D65 white point
    let xn = x / 0.95047;
    let yn = y / 1.0;
    let zn = z / 1.08883;

    fn f(t: f64) -> f64 {
        const DELTA: f64 = 6.0 / 29.0;
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    }

    let fx = f(xn);
    let fy = f(yn);
    let fz = f(zn);

    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_roundtrip() {
        let c = Rgb([12, 200, 7]);
        assert_eq!(Rgb::from_packed(c.packed()), c);
    }

    #[test]
    fn lab_reference_points() {
        // White and black are the standard anchors of the transform; the
        // published sRGB matrix is rounded, hence the loose tolerance.
        let white = lab_from_rgb(Rgb([255, 255, 255]));
        assert!((white[0] - 100.0).abs() < 1e-4, "L(white) = {}", white[0]);
        assert!(white[1].abs() < 1e-2 && white[2].abs() < 1e-2);

        let black = lab_from_rgb(Rgb([0, 0, 0]));
        assert!(black[0].abs() < 1e-9);
    }

    #[test]
    fn rgb_working_space_is_normalized() {
        let w = ColorSpace::Rgb.to_working(Rgb([255, 0, 128]));
        assert_eq!(w[0], 1.0);
        assert_eq!(w[1], 0.0);
        assert!((w[2] - 128.0 / 255.0).abs() < 1e-15);
    }
}
