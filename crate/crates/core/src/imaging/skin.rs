use serde::{Deserialize, Serialize};

use super::color::{hsv_pixel, ycbcr_pixel};
use super::{BitMask, ImageU8};
use crate::error::{ensure, Result};

/// Closed chrominance box classifying a pixel as skin.
///
/// The defaults are the commonly cited Cb∈[77,127], Cr∈[133,173]; they are a
/// starting point, not ground truth, and can be replaced per dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkinRange {
    pub cb: [u8; 2],
    pub cr: [u8; 2],
}

impl Default for SkinRange {
    fn default() -> Self {
        SkinRange {
            cb: [77, 127],
            cr: [133, 173],
        }
    }
}

impl SkinRange {
    pub fn contains(&self, cb: u8, cr: u8) -> bool {
        (self.cb[0]..=self.cb[1]).contains(&cb) && (self.cr[0]..=self.cr[1]).contains(&cr)
    }

    pub fn contains_rgb(&self, rgb: &[u8]) -> bool {
        let [_, cb, cr] = ycbcr_pixel(rgb[0], rgb[1], rgb[2]);
        self.contains(cb, cr)
    }
}

pub fn skin_mask_ycbcr(img: &ImageU8, cb_range: [u8; 2], cr_range: [u8; 2]) -> Result<BitMask> {
    ensure!(
        img.channels() == 3,
        "skin segmentation needs an RGB image, got {} channel(s)",
        img.channels()
    );
    ensure!(
        cb_range[0] <= cb_range[1] && cr_range[0] <= cr_range[1],
        "inverted skin range cb={cb_range:?} cr={cr_range:?}"
    );
    let range = SkinRange {
        cb: cb_range,
        cr: cr_range,
    };
    let bits = img.pixels().map(|p| range.contains_rgb(p)).collect();
    BitMask::from_bits(img.width(), img.height(), bits)
}

/// Single Gaussian over HSV hue (degrees, treated linearly).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HueGaussian {
    pub mean_hue: f64,
    pub variance: f64,
}

/// Mean and population variance of hue samples.
pub fn fit_hue_gaussian(hues: &[f64]) -> Result<HueGaussian> {
    ensure!(!hues.is_empty(), "cannot fit a hue model to zero samples");
    let n = hues.len() as f64;
    let mean = hues.iter().sum::<f64>() / n;
    let variance = hues.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / n;
    Ok(HueGaussian {
        mean_hue: mean,
        variance,
    })
}

/// Pixels below this saturation have no meaningful hue and are never skin.
pub const MIN_SATURATION: f64 = 0.15;

/// Marks pixels whose hue lies within `k` standard deviations of the model mean.
pub fn skin_mask_gaussian(img: &ImageU8, model: HueGaussian, k: f64) -> Result<BitMask> {
    ensure!(
        img.channels() == 3,
        "skin segmentation needs an RGB image, got {} channel(s)",
        img.channels()
    );
    ensure!(k > 0.0, "k must be positive, got {k}");
    let limit = k * model.variance.max(0.0).sqrt();
    let bits = img
        .pixels()
        .map(|p| {
            let hsv = hsv_pixel(p[0], p[1], p[2]);
            hsv.saturation >= MIN_SATURATION && (hsv.hue - model.mean_hue).abs() <= limit
        })
        .collect();
    BitMask::from_bits(img.width(), img.height(), bits)
}

/// Image enhancement stage ahead of segmentation. Currently the identity.
pub fn enhance(img: &ImageU8) -> ImageU8 {
    img.clone()
}
