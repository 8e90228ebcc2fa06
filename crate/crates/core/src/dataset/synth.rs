//! Deterministic renderer for synthetic hand-gesture images.
//!
//! A hand is an elliptical palm plus up to five capsule-shaped fingers,
//! drawn in a skin tone that lies inside the default YCbCr skin range over
//! a background that lies outside it. The pose is jittered (rotation, scale,
//! translation) from the seed. The generator owns the ground truth: the
//! returned mask is exactly the set of pixels painted with skin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::fs;
use std::path::Path;

use super::id::unique_image_id_with;
use super::labelmap::{build_label_map, LabelMap};
use super::yolo::{voc_to_yolo, write_yolo, YoloAnnotation};
use crate::error::{ensure, Error, Result};
use crate::imaging::{largest_component_bbox, BitMask, ImageU8, SkinRange};

pub const BACKGROUND_STYLES: u8 = 4;

/// Names for finger counts 0..=5, used as class labels for generated data.
pub const FINGER_NAMES: [&str; 6] = ["zero", "one", "two", "three", "four", "five"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticGestureSpec {
    pub finger_count: usize,
    pub canvas_w: usize,
    pub canvas_h: usize,
    /// Maximum absolute rotation, degrees.
    pub rotation_deg: f64,
    /// Maximum translation as a fraction of the canvas side.
    pub translation_frac: f64,
    /// Maximum relative scale change.
    pub scale_frac: f64,
    /// 0 solid, 1 gradient, 2 stripes, 3 noise.
    pub background_style: u8,
}

impl SyntheticGestureSpec {
    pub fn new(finger_count: usize) -> Self {
        SyntheticGestureSpec {
            finger_count,
            canvas_w: 96,
            canvas_h: 96,
            rotation_deg: 15.0,
            translation_frac: 0.08,
            scale_frac: 0.1,
            background_style: 0,
        }
    }

    pub fn with_background(mut self, style: u8) -> Self {
        self.background_style = style;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.finger_count <= 5, "finger_count must be 0..=5, got {}", self.finger_count);
        ensure!(
            self.canvas_w >= 32 && self.canvas_h >= 32,
            "canvas must be at least 32x32, got {}x{}",
            self.canvas_w,
            self.canvas_h
        );
        ensure!(
            self.rotation_deg >= 0.0 && self.translation_frac >= 0.0 && (0.0..0.5).contains(&self.scale_frac),
            "jitter parameters out of range"
        );
        ensure!(
            self.background_style < BACKGROUND_STYLES,
            "unknown background style {}",
            self.background_style
        );
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub image: ImageU8,
    pub annotation: YoloAnnotation,
    pub mask: BitMask,
}

/// Finger capsules in hand coordinates (palm centre at the origin, y down,
/// units of canvas pixels at a 96 px canvas): base, tip, radius.
const FINGERS: [([f64; 2], [f64; 2], f64); 5] = [
    ([-10.0, -12.0], [-13.5, -38.0], 3.2), // index
    ([-1.5, -14.0], [-1.5, -42.0], 3.2),   // middle
    ([7.0, -12.0], [10.5, -38.0], 3.2),    // ring
    ([13.0, -7.0], [21.0, -28.0], 2.8),    // little
    ([-13.0, 4.0], [-29.0, -9.0], 3.4),    // thumb
];
const PALM_RX: f64 = 15.0;
const PALM_RY: f64 = 17.0;
/// Vertical offset placing the whole hand, fingers included, near the canvas centre.
const HAND_CENTRE_DY: f64 = 12.0;

const SKIN_TONES: [[u8; 3]; 5] = [
    [224, 172, 140],
    [198, 134, 102],
    [236, 188, 160],
    [170, 112, 82],
    [210, 150, 120],
];

fn in_capsule(p: [f64; 2], a: [f64; 2], b: [f64; 2], r: f64) -> bool {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let (apx, apy) = (p[0] - a[0], p[1] - a[1]);
    let t = ((apx * abx + apy * aby) / (abx * abx + aby * aby)).clamp(0.0, 1.0);
    let (dx, dy) = (apx - t * abx, apy - t * aby);
    dx * dx + dy * dy <= r * r
}

fn in_hand(p: [f64; 2], fingers: usize) -> bool {
    if (p[0] / PALM_RX).powi(2) + (p[1] / PALM_RY).powi(2) <= 1.0 {
        return true;
    }
    FINGERS[..fingers]
        .iter()
        .any(|&(a, b, r)| in_capsule(p, a, b, r))
}

struct Pose {
    centre: [f64; 2],
    cos: f64,
    sin: f64,
    scale: f64,
}

impl Pose {
    fn to_hand(&self, x: f64, y: f64) -> [f64; 2] {
        let (dx, dy) = ((x - self.centre[0]) / self.scale, (y - self.centre[1]) / self.scale);
        [self.cos * dx + self.sin * dy, -self.sin * dx + self.cos * dy]
    }
}

fn render_mask(spec: &SyntheticGestureSpec, pose: &Pose) -> BitMask {
    let mut mask = BitMask::new(spec.canvas_w, spec.canvas_h);
    for y in 0..spec.canvas_h {
        for x in 0..spec.canvas_w {
            let p = pose.to_hand(x as f64 + 0.5, y as f64 + 0.5);
            if in_hand(p, spec.finger_count) {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

fn touches_border(mask: &BitMask) -> bool {
    let (w, h) = (mask.width(), mask.height());
    (0..w).any(|x| mask.get(x, 0) || mask.get(x, h - 1)) || (0..h).any(|y| mask.get(0, y) || mask.get(w - 1, y))
}

fn background_colour(rng: &mut ChaCha8Rng) -> [u8; 3] {
    match rng.random_range(0..3) {
        0 => {
            let v = rng.random_range(30..=230);
            [v, v, v]
        }
        1 => [
            rng.random_range(0..=80),
            rng.random_range(60..=200),
            rng.random_range(120..=240),
        ],
        _ => [
            rng.random_range(0..=90),
            rng.random_range(110..=220),
            rng.random_range(0..=110),
        ],
    }
}

/// Pushes a background colour out of the skin range, deterministically.
fn non_skin(mut c: [u8; 3], skin: &SkinRange) -> [u8; 3] {
    for _ in 0..8 {
        if !skin.contains_rgb(&c) {
            return c;
        }
        c = [c[0] / 2, c[1], c[2].saturating_add(60)];
    }
    [60, 90, 170]
}

fn mix(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    let m = |x: u8, y: u8| (x as f64 * (1.0 - t) + y as f64 * t).round() as u8;
    [m(a[0], b[0]), m(a[1], b[1]), m(a[2], b[2])]
}

pub fn gen_synthetic(spec: &SyntheticGestureSpec, seed: u64) -> Result<SyntheticSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skin = SkinRange::default();
    let (w, h) = (spec.canvas_w as f64, spec.canvas_h as f64);
    let base_scale = w.min(h) / 96.0;

    let angle = rng.random_range(-1.0..=1.0) * spec.rotation_deg.to_radians();
    let scale = base_scale * (1.0 + rng.random_range(-1.0..=1.0) * spec.scale_frac);
    let shift = [
        rng.random_range(-1.0..=1.0) * spec.translation_frac * w,
        rng.random_range(-1.0..=1.0) * spec.translation_frac * h,
    ];
    let tone = SKIN_TONES[rng.random_range(0..SKIN_TONES.len())];
    let bg_a = non_skin(background_colour(&mut rng), &skin);
    let bg_b = non_skin(background_colour(&mut rng), &skin);
    let noise_seed: u64 = rng.random();

    // Place the hand; shrink the translation until it no longer touches the border.
    let mut mask = BitMask::new(spec.canvas_w, spec.canvas_h);
    for attempt in 0..6 {
        let damp = if attempt == 5 { 0.0 } else { 0.5f64.powi(attempt) };
        let pose = Pose {
            centre: [w / 2.0 + shift[0] * damp, h / 2.0 + HAND_CENTRE_DY * scale + shift[1] * damp],
            cos: angle.cos(),
            sin: angle.sin(),
            scale,
        };
        mask = render_mask(spec, &pose);
        if !touches_border(&mask) {
            break;
        }
    }

    let mut noise = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut img = ImageU8::filled(spec.canvas_w, spec.canvas_h, &[0, 0, 0])?;
    for y in 0..spec.canvas_h {
        for x in 0..spec.canvas_w {
            let jitter: [i16; 3] = [
                noise.random_range(-6..=6),
                noise.random_range(-6..=6),
                noise.random_range(-6..=6),
            ];
            let colour = if mask.get(x, y) {
                let c = tone.map(|v| v as i16);
                let jittered = [0, 1, 2].map(|i| (c[i] + jitter[i]).clamp(0, 255) as u8);
                if skin.contains_rgb(&jittered) {
                    jittered
                } else {
                    tone
                }
            } else {
                let base = match spec.background_style {
                    0 => bg_a,
                    1 => mix(bg_a, bg_b, y as f64 / (spec.canvas_h - 1) as f64),
                    2 => {
                        if (x / 8) % 2 == 0 {
                            bg_a
                        } else {
                            bg_b
                        }
                    }
                    _ => {
                        let c = bg_a.map(|v| v as i16);
                        [0, 1, 2].map(|i| (c[i] + 3 * jitter[i]).clamp(0, 255) as u8)
                    }
                };
                non_skin(base, &skin)
            };
            img.pixel_mut(x, y).copy_from_slice(&colour);
        }
    }

    let bbox = largest_component_bbox(&mask)?;
    let annotation = voc_to_yolo(bbox, spec.finger_count, spec.canvas_w, spec.canvas_h)?;
    Ok(SyntheticSample {
        image: img,
        annotation,
        mask,
    })
}

/// Writes `out/<name>/<id>.png` with a YOLO sidecar for `per_class` images
/// of each of the first `classes` finger counts, plus `out/labelmap.txt`.
/// Image seeds and ids are drawn from `seed`; backgrounds cycle through the
/// available styles.
pub fn write_synthetic_dataset(out: &Path, classes: usize, per_class: usize, seed: u64) -> Result<LabelMap> {
    ensure!(
        (1..=FINGER_NAMES.len()).contains(&classes),
        "classes must lie in 1..={}, got {classes}",
        FINGER_NAMES.len()
    );
    ensure!(per_class >= 1, "per_class must be at least 1");
    let labels = build_label_map(&FINGER_NAMES[..classes])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (k, name) in FINGER_NAMES[..classes].iter().enumerate() {
        let dir = out.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 0..per_class {
            let spec = SyntheticGestureSpec::new(k).with_background((i % usize::from(BACKGROUND_STYLES)) as u8);
            let sample = gen_synthetic(&spec, rng.random())?;
            let id = unique_image_id_with(&mut rng);
            sample.image.save_png(dir.join(format!("{id}.png")))?;
            let ann = YoloAnnotation {
                class_id: k,
                ..sample.annotation
            };
            let txt = dir.join(format!("{id}.txt"));
            fs::write(&txt, write_yolo(&[ann])).map_err(|e| Error::io(&txt, e))?;
        }
    }
    let path = out.join("labelmap.txt");
    fs::write(&path, labels.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::skin_mask_ycbcr;

    #[test]
    fn deterministic() {
        let spec = SyntheticGestureSpec::new(3).with_background(3);
        let a = gen_synthetic(&spec, 11).unwrap();
        let b = gen_synthetic(&spec, 11).unwrap();
        assert_eq!(a.image.data(), b.image.data());
        assert_eq!(a, b);
        assert_ne!(gen_synthetic(&spec, 12).unwrap().image, a.image);
    }

    #[test]
    fn palm_only_mask_is_exactly_the_skin() {
        for style in 0..BACKGROUND_STYLES {
            let s = gen_synthetic(&SyntheticGestureSpec::new(0).with_background(style), 5).unwrap();
            let d = SkinRange::default();
            let seg = skin_mask_ycbcr(&s.image, d.cb, d.cr).unwrap();
            assert_eq!(seg, s.mask, "style {style}");
            assert_eq!(s.annotation.class_id, 0);
        }
    }

    #[test]
    fn more_fingers_more_pixels() {
        let spec = |k| SyntheticGestureSpec {
            rotation_deg: 0.0,
            translation_frac: 0.0,
            scale_frac: 0.0,
            ..SyntheticGestureSpec::new(k)
        };
        let counts: Vec<usize> = (0..=5).map(|k| gen_synthetic(&spec(k), 1).unwrap().mask.count()).collect();
        assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(gen_synthetic(&SyntheticGestureSpec::new(6), 0).is_err());
        let small = SyntheticGestureSpec {
            canvas_w: 16,
            ..SyntheticGestureSpec::new(1)
        };
        assert!(gen_synthetic(&small, 0).is_err());
        assert!(gen_synthetic(&SyntheticGestureSpec::new(1).with_background(9), 0).is_err());
    }

    #[test]
    fn hand_stays_inside_small_canvas() {
        let spec = SyntheticGestureSpec {
            canvas_w: 32,
            canvas_h: 40,
            ..SyntheticGestureSpec::new(5)
        };
        for seed in 0..20 {
            let s = gen_synthetic(&spec, seed).unwrap();
            assert!(!s.mask.is_empty());
            s.annotation.validate().unwrap();
        }
    }
}
