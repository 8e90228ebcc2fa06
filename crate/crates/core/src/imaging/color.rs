use super::ImageU8;
use crate::error::{ensure, Result};

/// BT.601 full-range YCbCr of one RGB pixel, rounded half-up and clamped.
pub fn ycbcr_pixel(r: u8, g: u8, b: u8) -> [u8; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    [quantize(y), quantize(cb), quantize(cr)]
}

fn quantize(v: f64) -> u8 {
    // half-up; the 1e-9 nudge absorbs representation error in exact .5 cases
    (v + 0.5 + 1e-9).floor().clamp(0.0, 255.0) as u8
}

pub fn rgb_to_ycbcr(img: &ImageU8) -> Result<ImageU8> {
    ensure!(
        img.channels() == 3,
        "rgb_to_ycbcr needs a 3-channel image, got {}",
        img.channels()
    );
    let data = img
        .pixels()
        .flat_map(|p| ycbcr_pixel(p[0], p[1], p[2]))
        .collect();
    ImageU8::new(img.width(), img.height(), 3, data)
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hsv {
    pub hue: f64,
    pub saturation: f64,
    pub value: f64,
}

/// Hexcone HSV; achromatic pixels get hue 0.
pub fn hsv_pixel(r: u8, g: u8, b: u8) -> Hsv {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    Hsv {
        hue: if hue >= 360.0 { hue - 360.0 } else { hue },
        saturation: if max == 0.0 { 0.0 } else { delta / max },
        value: max,
    }
}

pub fn rgb_to_hsv(img: &ImageU8) -> Result<Vec<Hsv>> {
    ensure!(
        img.channels() == 3,
        "rgb_to_hsv needs a 3-channel image, got {}",
        img.channels()
    );
    Ok(img.pixels().map(|p| hsv_pixel(p[0], p[1], p[2])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent reference: the integer-scaled JPEG/JFIF form of BT.601.
    fn reference_ycbcr(r: i64, g: i64, b: i64) -> [i64; 3] {
        let y = (299_000 * r + 587_000 * g + 114_000 * b + 500_000) / 1_000_000;
        let cb = (128_000_000 - 168_736 * r - 331_264 * g + 500_000 * b + 500_000) / 1_000_000;
        let cr = (128_000_000 + 500_000 * r - 418_688 * g - 81_312 * b + 500_000) / 1_000_000;
        [y, cb, cr].map(|v| v.clamp(0, 255))
    }

    #[test]
    fn ycbcr_golden_values() {
        assert_eq!(ycbcr_pixel(0, 0, 0), [0, 128, 128]);
        assert_eq!(ycbcr_pixel(255, 255, 255), [255, 128, 128]);
        assert_eq!(ycbcr_pixel(128, 128, 128), [128, 128, 128]);
    }

    #[test]
    fn ycbcr_matches_integer_reference_on_a_lattice() {
        for r in (0..=255).step_by(15) {
            for g in (0..=255).step_by(17) {
                for b in (0..=255).step_by(5) {
                    let ours = ycbcr_pixel(r as u8, g as u8, b as u8).map(i64::from);
                    assert_eq!(ours, reference_ycbcr(r, g, b), "rgb=({r},{g},{b})");
                }
            }
        }
    }

    #[test]
    fn ycbcr_rejects_gray() {
        let gray = ImageU8::filled(2, 2, &[7]).unwrap();
        assert!(rgb_to_ycbcr(&gray).is_err());
        assert!(rgb_to_hsv(&gray).is_err());
    }

    #[test]
    fn hsv_examples() {
        assert_eq!(
            hsv_pixel(255, 0, 0),
            Hsv {
                hue: 0.0,
                saturation: 1.0,
                value: 1.0
            }
        );
        let g = hsv_pixel(0, 255, 0);
        assert_eq!((g.hue, g.saturation, g.value), (120.0, 1.0, 1.0));
        let a = hsv_pixel(100, 100, 100);
        assert_eq!((a.hue, a.saturation, a.value), (0.0, 0.0, 100.0 / 255.0));
        assert_eq!(hsv_pixel(0, 0, 255).hue, 240.0);
        assert!((hsv_pixel(255, 0, 1).hue - 359.76470588235).abs() < 1e-6);
    }
}
