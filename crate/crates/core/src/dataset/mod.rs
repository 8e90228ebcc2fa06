//! Annotation formats, label maps, dataset splits and directory ingestion,
//! plus the synthetic gesture generator used for reproducible experiments.

mod id;
mod labelmap;
mod manifest;
mod split;
mod synth;
mod voc;
mod yolo;

pub use id::{unique_image_id, unique_image_id_with};
pub use labelmap::{build_label_map, LabelEntry, LabelMap};
pub use manifest::{ingest_directory, DatasetManifest, ManifestItem, SkippedFile, Split};
pub use split::{split_dataset, train_count};
pub use synth::{gen_synthetic, write_synthetic_dataset, SyntheticGestureSpec, SyntheticSample, BACKGROUND_STYLES, FINGER_NAMES};
pub use voc::{parse_voc_xml, write_voc_xml, VocAnnotation, VocObject};
pub use yolo::{parse_yolo, parse_yolo_line, voc_to_yolo, write_yolo, yolo_to_pixel, YoloAnnotation};
