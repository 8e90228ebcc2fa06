use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EvalConfig, TrainConfig, TrainMode};
use super::data::{Example, Target};
use super::metrics::{EpochMetrics, MetricsLog};
use crate::error::{ensure, Error, Result};
use crate::models::{
    decode_predictions, detector_loss_grad, encode_targets, save_checkpoint_with, Checkpoint, DetectorConfig,
    Gradients, NetKind, Network,
};
use crate::tensor::{cross_entropy, cross_entropy_grad, sgd_step, softmax, Tensor};

/// Outcome of [`evaluate`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[i][j]` counts examples of true class `i` predicted as `j`.
    pub confusion: Vec<Vec<usize>>,
    pub evaluated: usize,
}

/// Resume information stored inside every training checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TrainState {
    seed: u64,
    batch_size: usize,
    train_len: usize,
    log: MetricsLog,
}

#[derive(Clone, Copy)]
enum Task {
    Classify { classes: usize },
    Detect(DetectorConfig),
}

fn task_of(net: &Network) -> Task {
    match net.kind() {
        NetKind::Classifier => Task::Classify {
            classes: net.output_len(),
        },
        NetKind::Detector { grid, boxes, classes } => Task::Detect(DetectorConfig {
            grid,
            boxes,
            ..DetectorConfig::new(classes)
        }),
    }
}

impl Task {
    fn classes(&self) -> usize {
        match self {
            Task::Classify { classes } => *classes,
            Task::Detect(cfg) => cfg.classes,
        }
    }
}

/// True class of an example: the class index, or the first box's class.
fn true_class(ex: &Example) -> Result<usize> {
    match &ex.target {
        Target::Class(c) => Ok(*c),
        Target::Boxes(anns) => anns
            .first()
            .map(|a| a.class_id)
            .ok_or_else(|| Error::contract(format!("{} has no boxes", ex.source.display()))),
    }
}

/// Data loss (no regularization), predicted class, and the gradient of the
/// loss w.r.t. the traced network output when `want_grad` is set.
fn example_loss(task: Task, ex: &Example, acts: &[Tensor], want_grad: bool) -> Result<(f64, usize, Option<Tensor>)> {
    let out = acts.last().expect("trace is never empty");
    match (task, &ex.target) {
        (Task::Classify { .. }, Target::Class(c)) => {
            let probs = softmax(out);
            let loss = cross_entropy(&probs, *c)?;
            let grad = if want_grad { Some(cross_entropy_grad(&probs, *c)?) } else { None };
            Ok((loss, probs.argmax(), grad))
        }
        (Task::Detect(cfg), Target::Boxes(anns)) => {
            let target = encode_targets(anns, &cfg)?;
            let pred = out.clone().reshape(&cfg.grid_shape())?;
            let (loss, grad) = detector_loss_grad(&pred, &target, &cfg, &[])?;
            let best = decode_predictions(&pred, &cfg)?
                .into_iter()
                .enumerate()
                .max_by(|(i, a), (j, b)| a.score.total_cmp(&b.score).then(j.cmp(i)))
                .map(|(_, d)| d.class_id)
                .unwrap_or(0);
            let grad = if want_grad { Some(grad.reshape(out.shape())?) } else { None };
            Ok((loss.total, best, grad))
        }
        _ => Err(Error::contract(format!(
            "{}: target does not match the network kind",
            ex.source.display()
        ))),
    }
}

/// Accuracy, mean data loss and confusion matrix over the first
/// `min(max_steps, items.len())` examples, in order.
pub fn evaluate(net: &Network, items: &[Example], cfg: &EvalConfig) -> Result<EvalReport> {
    ensure!(!items.is_empty(), "evaluate needs at least one example");
    ensure!(cfg.max_steps >= 1, "max_steps must be at least 1");
    let task = task_of(net);
    let k = task.classes();
    let n = cfg.max_steps.min(items.len());
    let mut confusion = vec![vec![0usize; k]; k];
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for ex in &items[..n] {
        let acts = net.forward_trace(&ex.input)?;
        let (loss, predicted, _) = example_loss(task, ex, &acts, false)?;
        let truth = true_class(ex)?;
        ensure!(truth < k, "{}: class {truth} outside 0..{k}", ex.source.display());
        confusion[truth][predicted] += 1;
        correct += usize::from(truth == predicted);
        loss_sum += loss;
    }
    Ok(EvalReport {
        accuracy: correct as f64 / n as f64,
        mean_loss: loss_sum / n as f64,
        confusion,
        evaluated: n,
    })
}

/// Example order for one epoch: a Fisher-Yates shuffle driven by ChaCha8
/// seeded with `seed` on stream `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn batch_gradients(net: &Network, task: Task, train: &[Example], batch: &[usize]) -> Result<Gradients> {
    let mut total: Option<Gradients> = None;
    for &i in batch {
        let acts = net.forward_trace(&train[i].input)?;
        let (_, _, d_out) = example_loss(task, &train[i], &acts, true)?;
        let grads = net.param_gradients(&acts, &d_out.expect("gradient requested"))?;
        match &mut total {
            None => total = Some(grads),
            Some(t) => {
                for (a, g) in t.iter_mut().zip(&grads) {
                    a.add_scaled(g, 1.0)?;
                }
            }
        }
    }
    let mut total = total.expect("batches are never empty");
    for g in &mut total {
        g.scale(1.0 / batch.len() as f64);
    }
    Ok(total)
}

/// File name of the checkpoint written after `step` optimiser steps.
pub fn checkpoint_file_name(step: u64) -> String {
    format!("step-{step:08}.ckpt")
}

/// Mini-batch SGD over preprocessed examples.
///
/// Every epoch visits the training set in [`epoch_order`]; train and
/// validation metrics are full passes at the end of each epoch. When
/// `cfg.checkpoint_every > 0` and `checkpoint_dir` is set, a checkpoint
/// carrying the metrics so far is written every that many steps.
pub fn train_examples(
    net: Network,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(Network, MetricsLog)> {
    run(net, train, val, cfg, checkpoint_dir, 0, MetricsLog::new())
}

/// Continues a run from a checkpoint written by [`train_examples`]. With the
/// same data and configuration the result is bit-identical to an
/// uninterrupted run.
pub fn resume_training(
    ckpt: Checkpoint,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(Network, MetricsLog)> {
    let state: TrainState = ckpt
        .train_state
        .clone()
        .ok_or_else(|| Error::contract("checkpoint carries no training state"))
        .and_then(|v| serde_json::from_value(v).map_err(|e| Error::contract(format!("training state: {e}"))))?;
    ensure!(
        state.seed == cfg.seed && state.batch_size == cfg.batch_size && state.train_len == train.len(),
        "checkpoint was trained with seed {} batch {} on {} examples; resume asks for seed {} batch {} on {}",
        state.seed,
        state.batch_size,
        state.train_len,
        cfg.seed,
        cfg.batch_size,
        train.len()
    );
    run(ckpt.network, train, val, cfg, checkpoint_dir, ckpt.step, state.log)
}

fn check_mode(net: &Network, mode: TrainMode) -> Result<()> {
    let ok = matches!(
        (mode, net.kind()),
        (TrainMode::Classifier | TrainMode::Finetune, NetKind::Classifier) | (TrainMode::Detector, NetKind::Detector { .. })
    );
    ensure!(ok, "training mode {mode} does not fit a {:?} network", net.kind());
    Ok(())
}

fn run(
    mut net: Network,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    start_step: u64,
    mut log: MetricsLog,
) -> Result<(Network, MetricsLog)> {
    cfg.validate()?;
    check_mode(&net, cfg.mode)?;
    ensure!(!train.is_empty(), "training split is empty");
    ensure!(!val.is_empty(), "validation split is empty");
    if cfg.mode == TrainMode::Finetune {
        ensure!(
            net.trainable_parameter_count() < net.parameter_count(),
            "finetune mode expects some frozen parameters"
        );
    }
    let task = task_of(&net);
    let eval_all = EvalConfig { max_steps: usize::MAX };
    let n = train.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let total = cfg.epochs as u64 * steps_per_epoch;
    let reached = |log: &MetricsLog| {
        cfg.target_val_accuracy
            .zip(log.rows().last())
            .is_some_and(|(t, r)| r.val_accuracy >= t)
    };
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut step = start_step;
    let mut order = Vec::new();
    let mut order_epoch = u64::MAX;
    while step < total && !reached(&log) {
        let epoch = step / steps_per_epoch;
        if epoch != order_epoch {
            order = epoch_order(n, cfg.seed, epoch);
            order_epoch = epoch;
        }
        let offset = (step % steps_per_epoch) as usize * cfg.batch_size;
        let batch = &order[offset..(offset + cfg.batch_size).min(n)];
        let grads = batch_gradients(&net, task, train, batch)?;
        ensure!(
            grads.iter().all(Tensor::is_finite),
            "training diverged at step {}: non-finite gradient (try a smaller learning rate)",
            step + 1
        );
        sgd_step(net.params_mut(), &grads, cfg.learning_rate, cfg.weight_decay)?;
        step += 1;

        if step.is_multiple_of(steps_per_epoch) {
            let tr = evaluate(&net, train, &eval_all)?;
            let va = evaluate(&net, val, &eval_all)?;
            let row = EpochMetrics {
                epoch: (epoch + 1) as usize,
                train_loss: tr.mean_loss,
                val_loss: va.mean_loss,
                train_accuracy: tr.accuracy,
                val_accuracy: va.accuracy,
            };
            log::info!(
                "epoch {} train loss {:.4} acc {:.3} | val loss {:.4} acc {:.3}",
                row.epoch,
                row.train_loss,
                row.train_accuracy,
                row.val_loss,
                row.val_accuracy
            );
            log.push(row)?;
        }
        if let Some(dir) = checkpoint_dir.filter(|_| cfg.checkpoint_every > 0 && step.is_multiple_of(cfg.checkpoint_every)) {
            let state = TrainState {
                seed: cfg.seed,
                batch_size: cfg.batch_size,
                train_len: n,
                log: log.clone(),
            };
            let value = serde_json::to_value(&state).map_err(|e| Error::contract(e.to_string()))?;
            save_checkpoint_with(&net, step, Some(&value), dir.join(checkpoint_file_name(step)))?;
        }
    }
    Ok((net, log))
}
