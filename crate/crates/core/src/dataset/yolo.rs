use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::PixelBox;

const EXTENT_TOLERANCE: f64 = 1e-6;

/// One object in YOLO form: class id plus a box normalised to the image size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YoloAnnotation {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl YoloAnnotation {
    pub fn new(class_id: usize, cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let ann = YoloAnnotation {
            class_id,
            cx,
            cy,
            w,
            h,
        };
        ann.validate().map_err(Error::Contract)?;
        Ok(ann)
    }

    /// Checks the normalised-box invariants, naming the first offending field.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [("cx", self.cx), ("cy", self.cy), ("w", self.w), ("h", self.h)] {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        if !(0.0..=1.0).contains(&self.cx) {
            return Err(format!("cx must lie in [0,1], got {}", self.cx));
        }
        if !(0.0..=1.0).contains(&self.cy) {
            return Err(format!("cy must lie in [0,1], got {}", self.cy));
        }
        if !(self.w > 0.0 && self.w <= 1.0) {
            return Err(format!("w must lie in (0,1], got {}", self.w));
        }
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(format!("h must lie in (0,1], got {}", self.h));
        }
        let (x0, x1) = (self.cx - self.w / 2.0, self.cx + self.w / 2.0);
        let (y0, y1) = (self.cy - self.h / 2.0, self.cy + self.h / 2.0);
        if x0 < -EXTENT_TOLERANCE || x1 > 1.0 + EXTENT_TOLERANCE {
            return Err(format!("box spans x [{x0}, {x1}] outside the image"));
        }
        if y0 < -EXTENT_TOLERANCE || y1 > 1.0 + EXTENT_TOLERANCE {
            return Err(format!("box spans y [{y0}, {y1}] outside the image"));
        }
        Ok(())
    }

    /// Same record with every coordinate rounded to six decimals.
    pub fn rounded(&self) -> Self {
        let r = |v: f64| (v * 1e6).round() / 1e6;
        YoloAnnotation {
            class_id: self.class_id,
            cx: r(self.cx),
            cy: r(self.cy),
            w: r(self.w),
            h: r(self.h),
        }
    }

    /// `(x_min, y_min, x_max, y_max)` in normalised coordinates.
    pub fn corners(&self) -> [f64; 4] {
        [
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        ]
    }
}

fn parse_at(line: &str, line_no: usize) -> Result<YoloAnnotation> {
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(err(format!("expected 5 fields, found {}", fields.len())));
    }
    let class_id = fields[0]
        .parse::<usize>()
        .map_err(|_| err(format!("class id {:?} is not a nonnegative integer", fields[0])))?;
    let mut vals = [0.0; 4];
    for (slot, (name, text)) in vals.iter_mut().zip(["cx", "cy", "w", "h"].iter().zip(&fields[1..])) {
        *slot = text
            .parse::<f64>()
            .map_err(|_| err(format!("{name} {text:?} is not a number")))?;
    }
    let ann = YoloAnnotation {
        class_id,
        cx: vals[0],
        cy: vals[1],
        w: vals[2],
        h: vals[3],
    };
    ann.validate().map_err(err)?;
    Ok(ann)
}

pub fn parse_yolo_line(line: &str) -> Result<YoloAnnotation> {
    parse_at(line, 1)
}

/// Parses a whole sidecar file; blank lines are skipped, numbering is 1-based.
pub fn parse_yolo(text: &str) -> Result<Vec<YoloAnnotation>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_at(l, i + 1))
        .collect()
}

pub fn write_yolo(anns: &[YoloAnnotation]) -> String {
    anns.iter()
        .map(|a| format!("{} {:.6} {:.6} {:.6} {:.6}\n", a.class_id, a.cx, a.cy, a.w, a.h))
        .collect()
}

/// Inclusive-pixel box to YOLO: `cx = (x_min + x_max + 1) / (2·W)`, `w = (x_max − x_min + 1) / W`.
pub fn voc_to_yolo(b: PixelBox, class_id: usize, img_w: usize, img_h: usize) -> Result<YoloAnnotation> {
    if b.x_min > b.x_max || b.y_min > b.y_max || b.x_max >= img_w || b.y_max >= img_h {
        return Err(Error::contract(format!(
            "box {b:?} does not fit a {img_w}x{img_h} image"
        )));
    }
    let (w, h) = (img_w as f64, img_h as f64);
    YoloAnnotation::new(
        class_id,
        (b.x_min + b.x_max + 1) as f64 / (2.0 * w),
        (b.y_min + b.y_max + 1) as f64 / (2.0 * h),
        b.width() as f64 / w,
        b.height() as f64 / h,
    )
}

/// Inverse of [`voc_to_yolo`] under the inclusive-pixel convention.
pub fn yolo_to_pixel(ann: &YoloAnnotation, img_w: usize, img_h: usize) -> Result<PixelBox> {
    let axis = |c: f64, extent: f64, len: usize| -> (usize, usize) {
        let size = (extent * len as f64).round().max(1.0);
        let lo = (c * len as f64 - size / 2.0).round().clamp(0.0, (len - 1) as f64);
        let hi = (lo + size - 1.0).min((len - 1) as f64);
        (lo as usize, hi as usize)
    };
    let (x0, x1) = axis(ann.cx, ann.w, img_w);
    let (y0, y1) = axis(ann.cy, ann.h, img_h);
    PixelBox::new(x0, y0, x1, y1)
}
