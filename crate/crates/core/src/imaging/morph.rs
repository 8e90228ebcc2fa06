//! Binary morphology with a 3×3 square structuring element.
//!
//! Masks are treated as sets on the infinite plane: everything outside the
//! image is background. Erosion therefore clears border pixels, and closing
//! keeps the intermediate dilation on a one-pixel margin so that pixels on
//! the image border survive it.

use super::BitMask;

fn erode_into(src: &[bool], width: usize, height: usize) -> Vec<bool> {
    let mut out = vec![false; src.len()];
    if width < 3 || height < 3 {
        return out;
    }
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            out[y * width + x] = (y - 1..=y + 1)
                .all(|yy| src[yy * width + x - 1..=yy * width + x + 1].iter().all(|&b| b));
        }
    }
    out
}

fn dilate_into(src: &[bool], width: usize, height: usize) -> Vec<bool> {
    let mut out = vec![false; src.len()];
    for y in 0..height {
        for x in 0..width {
            if !src[y * width + x] {
                continue;
            }
            for yy in y.saturating_sub(1)..=(y + 1).min(height - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(width - 1) {
                    out[yy * width + xx] = true;
                }
            }
        }
    }
    out
}

pub fn erode(mask: &BitMask) -> BitMask {
    let bits = erode_into(mask.bits(), mask.width(), mask.height());
    BitMask::from_bits(mask.width(), mask.height(), bits).expect("same geometry")
}

pub fn dilate(mask: &BitMask) -> BitMask {
    let bits = dilate_into(mask.bits(), mask.width(), mask.height());
    BitMask::from_bits(mask.width(), mask.height(), bits).expect("same geometry")
}

/// Erosion followed by dilation; removes foreground specks thinner than 3 px.
pub fn morph_open(mask: &BitMask) -> BitMask {
    dilate(&erode(mask))
}

/// Dilation followed by erosion; fills background gaps thinner than 3 px.
pub fn morph_close(mask: &BitMask) -> BitMask {
    let (w, h) = (mask.width(), mask.height());
    let (pw, ph) = (w + 2, h + 2);
    let mut padded = vec![false; pw * ph];
    for (x, y) in mask.set_pixels() {
        padded[(y + 1) * pw + x + 1] = true;
    }
    let closed = erode_into(&dilate_into(&padded, pw, ph), pw, ph);
    let mut out = BitMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, closed[(y + 1) * pw + x + 1]);
        }
    }
    out
}
