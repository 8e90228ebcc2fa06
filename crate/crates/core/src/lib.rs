//! Hand-gesture digit recognition toolkit.
//!
//! The crate is organised as a pipeline:
//!
//! * [`tensor`] - dense tensors, differentiable layers, SGD, gradient checking
//! * [`imaging`] - colour spaces, skin segmentation, morphology, shape features
//! * [`dataset`] - YOLO / VOC annotations, label maps, splits, synthetic gestures
//! * [`models`] - classifier network, grid detector, feature store, checkpoints
//! * [`harness`] - training, evaluation, curves, inference and frame streams
//! * [`service`] - HTTP annotation service backing the browser labelling tool

pub mod error;
pub mod tensor;

pub use error::{Error, Result};
pub mod imaging;
pub mod dataset;
pub mod models;
pub mod harness;
pub mod service;
