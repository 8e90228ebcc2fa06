use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Classifier,
    Detector,
    /// Classifier training where frozen parameters stay untouched.
    Finetune,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Classifier => "classifier",
            TrainMode::Detector => "detector",
            TrainMode::Finetune => "finetune",
        })
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classifier" => Ok(TrainMode::Classifier),
            "detector" => Ok(TrainMode::Detector),
            "finetune" => Ok(TrainMode::Finetune),
            other => Err(format!("unknown training mode {other:?}")),
        }
    }
}

/// Optimisation settings. Defaults are tuned for the synthetic gesture set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// L2 coefficient on weights.
    pub weight_decay: f64,
    pub seed: u64,
    /// Write a checkpoint every this many optimiser steps; 0 disables.
    pub checkpoint_every: u64,
    pub mode: TrainMode,
    /// Stop after the first epoch whose validation accuracy reaches this value.
    pub target_val_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 8,
            learning_rate: 0.02,
            weight_decay: 1e-4,
            seed: 42,
            checkpoint_every: 0,
            mode: TrainMode::Classifier,
            target_val_accuracy: None,
        }
    }
}

impl TrainConfig {
    /// Defaults with a learning rate suited to `mode`.
    pub fn for_mode(mode: TrainMode) -> Self {
        let learning_rate = match mode {
            TrainMode::Detector => 0.002,
            TrainMode::Classifier | TrainMode::Finetune => 0.02,
        };
        TrainConfig {
            mode,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, "epochs must be at least 1");
        ensure!(self.batch_size >= 1, "batch_size must be at least 1");
        ensure!(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            "learning_rate must be finite and nonnegative, got {}",
            self.learning_rate
        );
        ensure!(
            self.weight_decay >= 0.0 && self.weight_decay.is_finite(),
            "weight_decay must be finite and nonnegative"
        );
        if let Some(t) = self.target_val_accuracy {
            ensure!((0.0..=1.0).contains(&t), "target accuracy {t} outside [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Upper bound on the number of evaluated examples.
    pub max_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { max_steps: 10_000 }
    }
}
