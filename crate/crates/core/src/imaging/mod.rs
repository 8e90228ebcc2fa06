//! Image containers and the hand-segmentation stages: colour conversion,
//! skin classification, morphological cleanup, region extraction and
//! shape descriptors.

mod color;
mod image;
mod morph;
mod resize;
mod shape;
mod skin;

pub use color::{hsv_pixel, rgb_to_hsv, rgb_to_ycbcr, ycbcr_pixel, Hsv};
pub use image::{BitMask, ImageU8, PixelBox};
pub use morph::{dilate, erode, morph_close, morph_open};
pub use resize::{resize, ResizeMode};
pub use shape::{components, hu_moments, largest_component, largest_component_bbox, orientation, Component};
pub use skin::{
    enhance, fit_hue_gaussian, skin_mask_gaussian, skin_mask_ycbcr, HueGaussian, SkinRange, MIN_SATURATION,
};

use crate::error::Result;

/// Default segmentation: YCbCr skin mask, opening, then closing.
pub fn segment_hand(img: &ImageU8, range: SkinRange) -> Result<BitMask> {
    let mask = skin_mask_ycbcr(&enhance(img), range.cb, range.cr)?;
    Ok(morph_close(&morph_open(&mask)))
}

/// Segments the image and returns the largest skin component.
pub fn find_hand(img: &ImageU8, range: SkinRange) -> Result<Component> {
    largest_component(&segment_hand(img, range)?)
}
