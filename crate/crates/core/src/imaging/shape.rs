use super::{BitMask, PixelBox};
use crate::error::{ensure, Error, Result};

/// A 4-connected set of mask pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub bbox: PixelBox,
    pub pixel_count: usize,
    /// Mask of the component alone, same geometry as the source mask.
    pub mask: BitMask,
}

/// All 4-connected components in row-major discovery order.
pub fn components(mask: &BitMask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut label = vec![usize::MAX; w * h];
    let mut found = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits()[start] || label[start] != usize::MAX {
            continue;
        }
        let id = found.len();
        let mut pixels = Vec::new();
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.bits()[j] && label[j] == usize::MAX {
                    label[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        let mut comp_mask = BitMask::new(w, h);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &i in &pixels {
            let (x, y) = (i % w, i / w);
            comp_mask.set(x, y, true);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        found.push(Component {
            bbox: PixelBox {
                x_min: x0,
                y_min: y0,
                x_max: x1,
                y_max: y1,
            },
            pixel_count: pixels.len(),
            mask: comp_mask,
        });
    }
    found
}

/// Largest 4-connected component; equal sizes go to the smallest `(y_min, x_min)`.
pub fn largest_component(mask: &BitMask) -> Result<Component> {
    components(mask)
        .into_iter()
        .min_by_key(|c| (std::cmp::Reverse(c.pixel_count), c.bbox.y_min, c.bbox.x_min))
        .ok_or(Error::NoHandRegion)
}

/// Tight box around the largest component, the hand region.
pub fn largest_component_bbox(mask: &BitMask) -> Result<PixelBox> {
    largest_component(mask).map(|c| c.bbox)
}

struct Moments {
    m00: f64,
    cx: f64,
    cy: f64,
}

impl Moments {
    fn of(mask: &BitMask) -> Self {
        let (mut n, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for (x, y) in mask.set_pixels() {
            n += 1.0;
            sx += x as f64;
            sy += y as f64;
        }
        Moments {
            m00: n,
            cx: sx / n,
            cy: sy / n,
        }
    }

    fn central(&self, mask: &BitMask, p: i32, q: i32) -> f64 {
        mask.set_pixels()
            .map(|(x, y)| (x as f64 - self.cx).powi(p) * (y as f64 - self.cy).powi(q))
            .sum()
    }
}

/// Principal-axis angle in degrees, in `[-90, 90)`; x runs along columns, y along rows.
pub fn orientation(mask: &BitMask) -> Result<f64> {
    ensure!(
        mask.count() >= 2,
        "orientation needs at least two set pixels, got {}",
        mask.count()
    );
    let m = Moments::of(mask);
    let mu11 = m.central(mask, 1, 1);
    let mu20 = m.central(mask, 2, 0);
    let mu02 = m.central(mask, 0, 2);
    let scale = mu20.abs().max(mu02.abs()).max(1.0);
    if mu11.abs() <= 1e-12 * scale && (mu20 - mu02).abs() <= 1e-12 * scale {
        return Ok(0.0);
    }
    let mut deg = 0.5 * (2.0 * mu11).atan2(mu20 - mu02).to_degrees();
    if deg >= 90.0 {
        deg -= 180.0;
    }
    Ok(deg)
}

/// The seven Hu invariants of the mask's normalised central moments.
pub fn hu_moments(mask: &BitMask) -> Result<[f64; 7]> {
    ensure!(!mask.is_empty(), "hu_moments of an empty mask");
    let m = Moments::of(mask);
    let eta = |p: i32, q: i32| {
        let gamma = 1.0 + (p + q) as f64 / 2.0;
        m.central(mask, p, q) / m.m00.powf(gamma)
    };
    let (n20, n02, n11) = (eta(2, 0), eta(0, 2), eta(1, 1));
    let (n30, n03, n21, n12) = (eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2));

    let a = n30 + n12;
    let b = n21 + n03;
    let h1 = n20 + n02;
    let h2 = (n20 - n02).powi(2) + 4.0 * n11 * n11;
    let h3 = (n30 - 3.0 * n12).powi(2) + (3.0 * n21 - n03).powi(2);
    let h4 = a * a + b * b;
    let h5 = (n30 - 3.0 * n12) * a * (a * a - 3.0 * b * b)
        + (3.0 * n21 - n03) * b * (3.0 * a * a - b * b);
    let h6 = (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b;
    let h7 = (3.0 * n21 - n03) * a * (a * a - 3.0 * b * b)
        - (n30 - 3.0 * n12) * b * (3.0 * a * a - b * b);
    Ok([h1, h2, h3, h4, h5, h6, h7])
}
