use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::data::{detector_input, preprocess_hand, CLASSIFIER_SIDE, DETECTOR_SIDE};
use crate::dataset::{yolo_to_pixel, YoloAnnotation};
use crate::error::{ensure, Error, Result};
use crate::imaging::{ImageU8, PixelBox};
use crate::models::{decode_predictions, features_from_component, nms, DetectorConfig, FeatureStore, NetKind, Network};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Cnn,
    Features,
    Detector,
}

impl std::str::FromStr for Pipeline {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cnn" => Ok(Pipeline::Cnn),
            "features" => Ok(Pipeline::Features),
            "detector" => Ok(Pipeline::Detector),
            other => Err(format!("unknown pipeline {other:?}")),
        }
    }
}

/// A loaded model for one of the three inference pipelines.
#[derive(Clone, Debug)]
pub enum Predictor {
    Cnn(Network),
    Features(FeatureStore),
    Detector {
        net: Network,
        /// Detections scoring below this are ignored.
        min_score: f64,
        /// NMS overlap threshold.
        iou_threshold: f64,
    },
}

impl Predictor {
    pub fn detector(net: Network) -> Self {
        Predictor::Detector {
            net,
            min_score: 0.25,
            iou_threshold: 0.5,
        }
    }

    pub fn pipeline(&self) -> Pipeline {
        match self {
            Predictor::Cnn(_) => Pipeline::Cnn,
            Predictor::Features(_) => Pipeline::Features,
            Predictor::Detector { .. } => Pipeline::Detector,
        }
    }
}

/// Result of one inference. `label` is `None` when nothing was detected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub label: Option<String>,
    pub confidence: f64,
    /// Hand box for the segmenting pipelines, best detection for the detector.
    pub bbox: Option<PixelBox>,
}

impl Inference {
    pub fn none() -> Self {
        Inference {
            label: None,
            confidence: 0.0,
            bbox: None,
        }
    }

    pub fn is_detection(&self) -> bool {
        self.label.is_some()
    }
}

fn label_of(net: &Network, class: usize) -> String {
    net.labels.get(class).cloned().unwrap_or_else(|| class.to_string())
}

/// Runs `predictor` on a decoded image. A frame without a hand region
/// yields [`Inference::none`].
pub fn infer(predictor: &Predictor, img: &ImageU8) -> Result<Inference> {
    match predictor {
        Predictor::Cnn(net) => {
            ensure!(net.kind() == NetKind::Classifier, "cnn pipeline needs a classifier network");
            let side = net.input_shape().get(1).copied().unwrap_or(CLASSIFIER_SIDE);
            let (input, bbox) = match preprocess_hand(img, side) {
                Ok(v) => v,
                Err(Error::NoHandRegion) => return Ok(Inference::none()),
                Err(e) => return Err(e),
            };
            let probs = net.forward(&input)?;
            let class = probs.argmax();
            Ok(Inference {
                label: Some(label_of(net, class)),
                confidence: probs.data()[class],
                bbox: Some(bbox),
            })
        }
        Predictor::Features(store) => {
            let hand = match crate::imaging::find_hand(img, Default::default()) {
                Ok(h) => h,
                Err(Error::NoHandRegion) => return Ok(Inference::none()),
                Err(e) => return Err(e),
            };
            let (label, distance) = store.nearest_match(&features_from_component(&hand)?)?;
            Ok(Inference {
                label: Some(label),
                confidence: 1.0 / (1.0 + distance),
                bbox: Some(hand.bbox),
            })
        }
        Predictor::Detector {
            net,
            min_score,
            iou_threshold,
        } => {
            let NetKind::Detector { grid, boxes, classes } = net.kind() else {
                return Err(Error::contract("detector pipeline needs a detector network"));
            };
            let cfg = DetectorConfig {
                grid,
                boxes,
                ..DetectorConfig::new(classes)
            };
            let side = net.input_shape().get(1).copied().unwrap_or(DETECTOR_SIDE);
            let pred = net.forward(&detector_input(img, side)?)?.reshape(&cfg.grid_shape())?;
            let kept = nms(&decode_predictions(&pred, &cfg)?, *iou_threshold);
            let Some(best) = kept.first().filter(|d| d.score >= *min_score) else {
                return Ok(Inference::none());
            };
            let [x0, y0, x1, y1] = best.bbox.corners().map(|v| v.clamp(0.0, 1.0));
            let clamped = YoloAnnotation {
                class_id: best.class_id,
                cx: (x0 + x1) / 2.0,
                cy: (y0 + y1) / 2.0,
                w: x1 - x0,
                h: y1 - y0,
            };
            Ok(Inference {
                label: Some(label_of(net, best.class_id)),
                confidence: best.score,
                bbox: yolo_to_pixel(&clamped, img.width(), img.height()).ok(),
            })
        }
    }
}

pub fn infer_path(predictor: &Predictor, path: impl AsRef<Path>) -> Result<Inference> {
    infer(predictor, &ImageU8::load_png(path)?)
}

/// One frame of [`run_stream`] output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub frame_index: usize,
    pub file: String,
    pub label: Option<String>,
    pub confidence: f64,
    pub bbox: Option<PixelBox>,
    pub elapsed_ms: f64,
    /// Set when the frame could not be processed; the stream continues.
    pub error: Option<String>,
}

/// Regular, non-hidden files of `dir` in lexicographic order.
pub fn frame_files(dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let hidden = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'));
        if path.is_file() && !hidden {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Infers every frame of `frames_dir` in order, handing one record per frame
/// to `sink`. Returns the number of frames seen.
pub fn run_stream(
    predictor: &Predictor,
    frames_dir: impl AsRef<Path>,
    mut sink: impl FnMut(StreamRecord),
) -> Result<usize> {
    let files = frame_files(frames_dir)?;
    for (frame_index, path) in files.iter().enumerate() {
        let start = Instant::now();
        let result = ImageU8::load_png(path).and_then(|img| infer(predictor, &img));
        let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let record = match result {
            Ok(inf) => StreamRecord {
                frame_index,
                file,
                label: inf.label,
                confidence: inf.confidence,
                bbox: inf.bbox,
                elapsed_ms,
                error: None,
            },
            Err(e) => {
                log::warn!("frame {frame_index}: {e}");
                StreamRecord {
                    frame_index,
                    file,
                    label: None,
                    confidence: 0.0,
                    bbox: None,
                    elapsed_ms,
                    error: Some(e.to_string()),
                }
            }
        };
        sink(record);
    }
    Ok(files.len())
}
