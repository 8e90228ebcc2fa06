//! Networks, the grid detector, checkpoints and the feature store.

mod checkpoint;
mod detector;
mod features;
mod network;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, load_checkpoint_into, save_checkpoint,
    save_checkpoint_with, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use detector::{
    decode_predictions, decode_targets, detector_loss, detector_loss_grad, encode_targets, iou, nms, Detection,
    DetectorConfig, DetectorLoss, NormBox,
};
pub use features::{
    extract_gesture_features, features_from_component, FeatureStore, FeatureVector, FEATURE_DIM, STD_FLOOR,
};
pub use network::{
    build_classifier, build_detector, classifier_architecture, detector_architecture, Architecture, Gradients,
    LayerSpec, NetKind, Network,
};
