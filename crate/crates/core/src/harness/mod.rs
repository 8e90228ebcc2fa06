//! Training and evaluation loops, metric curves, and the inference pipelines.

mod config;
mod data;
mod infer;
mod metrics;
mod train;

use std::path::Path;

pub use config::{EvalConfig, TrainConfig, TrainMode};
pub use data::{
    classifier_example, detector_example, detector_input, preprocess_hand, Example, Target, CLASSIFIER_SIDE,
    DETECTOR_SIDE,
};
pub use infer::{frame_files, infer, infer_path, run_stream, Inference, Pipeline, Predictor, StreamRecord};
pub use metrics::{export_curves, CurveFormat, EpochMetrics, MetricsLog, CSV_HEADER};
pub use train::{checkpoint_file_name, epoch_order, evaluate, resume_training, train_examples, EvalReport};

use crate::dataset::{DatasetManifest, Split};
use crate::error::{ensure, Result};
use crate::models::{build_classifier, NetKind, Network};

/// Preprocesses the items of one split for `net`. Classifier targets index
/// into `net.labels`.
pub fn load_examples(manifest: &DatasetManifest, split: Split, net: &Network) -> Result<Vec<Example>> {
    let side = net.input_shape().get(1).copied().unwrap_or(CLASSIFIER_SIDE);
    manifest
        .split_items(split)
        .into_iter()
        .map(|item| match net.kind() {
            NetKind::Classifier => classifier_example(item, &net.labels, side),
            NetKind::Detector { classes, .. } => detector_example(item, classes, side),
        })
        .collect()
}

/// Trains `net` on the manifest's train split, validating on its val split.
/// Networks without labels take the manifest's class names.
pub fn train(
    mut net: Network,
    manifest: &DatasetManifest,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(Network, MetricsLog)> {
    if net.labels.is_empty() {
        net.labels = manifest.class_names();
    }
    ensure!(
        net.labels.len() == net.output_len() || net.kind() != NetKind::Classifier,
        "network has {} outputs but {} labels",
        net.output_len(),
        net.labels.len()
    );
    let train_set = load_examples(manifest, Split::Train, &net)?;
    let val_set = load_examples(manifest, Split::Val, &net)?;
    train_examples(net, &train_set, &val_set, cfg, checkpoint_dir)
}

/// A fresh classifier whose convolutional backbone is copied from
/// `pretrained` and frozen; only the dense head remains trainable.
pub fn prepare_finetune(pretrained: &Network, labels: Vec<String>, seed: u64) -> Result<Network> {
    ensure!(pretrained.kind() == NetKind::Classifier, "fine-tuning starts from a classifier");
    let side = pretrained.input_shape()[1];
    let mut net = build_classifier(labels.len(), side, seed)?.with_labels(labels);
    let copied = net.copy_matching_params(pretrained, "conv");
    ensure!(!copied.is_empty(), "pretrained network has no compatible conv layers");
    net.set_trainable("conv", false)?;
    Ok(net)
}
