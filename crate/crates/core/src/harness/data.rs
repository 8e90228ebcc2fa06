use std::fs;
use std::path::PathBuf;

use crate::dataset::{parse_yolo, ManifestItem, YoloAnnotation};
use crate::error::{ensure, Error, Result};
use crate::imaging::{find_hand, resize, ImageU8, PixelBox, ResizeMode, SkinRange};
use crate::tensor::Tensor;

/// Side of the square grayscale hand crop fed to the classifier.
pub const CLASSIFIER_SIDE: usize = 32;
/// Side of the RGB full frame fed to the detector.
pub const DETECTOR_SIDE: usize = 96;

/// Segments the hand, keeps only its pixels, pads the crop to a centred
/// square, resizes to `side` and scales gray levels to `[0, 1]`.
///
/// Returns the `[1, side, side]` tensor and the hand box in source pixels.
pub fn preprocess_hand(img: &ImageU8, side: usize) -> Result<(Tensor, PixelBox)> {
    let hand = find_hand(img, SkinRange::default())?;
    let gray = img.to_gray();
    let b = hand.bbox;
    let len = b.width().max(b.height());
    let (ox, oy) = ((len - b.width()) / 2, (len - b.height()) / 2);
    let mut square = ImageU8::filled(len, len, &[0])?;
    for y in b.y_min..=b.y_max {
        for x in b.x_min..=b.x_max {
            if hand.mask.get(x, y) {
                square.pixel_mut(x - b.x_min + ox, y - b.y_min + oy)[0] = gray.pixel(x, y)[0];
            }
        }
    }
    let small = resize(&square, side, side, ResizeMode::Bilinear)?;
    let data = small.data().iter().map(|&v| f64::from(v) / 255.0).collect();
    Ok((Tensor::new(vec![1, side, side], data)?, b))
}

/// Full frame as a `[3, side, side]` tensor in `[0, 1]`; gray frames are
/// replicated across channels and other sizes are resized bilinearly.
pub fn detector_input(img: &ImageU8, side: usize) -> Result<Tensor> {
    ensure!(
        img.channels() == 1 || img.channels() == 3,
        "detector expects gray or RGB frames, got {} channels",
        img.channels()
    );
    let frame = resize(img, side, side, ResizeMode::Bilinear)?;
    let c = frame.channels();
    let mut data = vec![0.0; 3 * side * side];
    for (i, px) in frame.pixels().enumerate() {
        for ch in 0..3 {
            data[ch * side * side + i] = f64::from(px[if c == 3 { ch } else { 0 }]) / 255.0;
        }
    }
    Tensor::new(vec![3, side, side], data)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// Zero-based class index.
    Class(usize),
    Boxes(Vec<YoloAnnotation>),
}

/// A preprocessed network input with its target.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Tensor,
    pub target: Target,
    pub source: PathBuf,
}

/// Classifier example: hand crop labelled with the index of its class in `labels`.
pub fn classifier_example(item: &ManifestItem, labels: &[String], side: usize) -> Result<Example> {
    let class = class_index(item, labels)?;
    let img = ImageU8::load_png(&item.image_path)?;
    let (input, _) = preprocess_hand(&img, side).map_err(|e| with_path(e, item))?;
    Ok(Example {
        input,
        target: Target::Class(class),
        source: item.image_path.clone(),
    })
}

/// Detector example: full frame plus the boxes of its YOLO sidecar.
pub fn detector_example(item: &ManifestItem, num_classes: usize, side: usize) -> Result<Example> {
    let img = ImageU8::load_png(&item.image_path)?;
    let path = item.annotation_path();
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let anns = parse_yolo(&text).map_err(|e| Error::contract(format!("{}: {e}", path.display())))?;
    ensure!(!anns.is_empty(), "{} has no boxes", path.display());
    ensure!(
        anns.iter().all(|a| a.class_id < num_classes),
        "{} has a class id outside 0..{num_classes}",
        path.display()
    );
    Ok(Example {
        input: detector_input(&img, side)?,
        target: Target::Boxes(anns),
        source: item.image_path.clone(),
    })
}

fn class_index(item: &ManifestItem, labels: &[String]) -> Result<usize> {
    labels
        .iter()
        .position(|l| *l == item.class_name)
        .ok_or_else(|| Error::contract(format!("{}: class {:?} is not in the label set", item.image_path.display(), item.class_name)))
}

fn with_path(e: Error, item: &ManifestItem) -> Error {
    match e {
        Error::NoHandRegion => Error::Image {
            path: item.image_path.clone(),
            message: "no hand region".into(),
        },
        other => other,
    }
}
