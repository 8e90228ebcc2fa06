use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gesture_core::dataset::{
    build_label_map, ingest_directory, write_synthetic_dataset, DatasetManifest, LabelMap, Split,
};
use gesture_core::harness::{
    export_curves, infer_path, load_examples, prepare_finetune, run_stream, train, CurveFormat, EvalConfig,
    MetricsLog, Pipeline, Predictor, TrainConfig, TrainMode, CLASSIFIER_SIDE, DETECTOR_SIDE,
};
use gesture_core::models::{
    build_classifier, build_detector, extract_gesture_features, load_checkpoint, save_checkpoint, DetectorConfig,
    FeatureStore,
};
use gesture_core::service::{serve, ServiceConfig};
use gesture_core::{Error, Result};

const MANIFEST_FILE: &str = "manifest.tsv";
const LABELMAP_FILE: &str = "labelmap.txt";

#[derive(Parser)]
#[command(name = "gesture", version, about = "Hand-gesture digit recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic gesture dataset with YOLO sidecars.
    Gen {
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Ingest a dataset directory and assign train/val splits.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Manifest path (default: <dataset>/manifest.tsv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a label map from comma-separated names.
    Labelmap {
        #[arg(long, value_delimiter = ',', required = true)]
        names: Vec<String>,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a classifier, detector, or fine-tuned classifier.
    Train {
        #[arg(long, default_value = "classifier")]
        mode: TrainMode,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long = "lambda")]
        weight_decay: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        checkpoint_every: u64,
        /// Stop once validation accuracy reaches this value.
        #[arg(long)]
        target_accuracy: Option<f64>,
        #[arg(long)]
        checkpoint_dir: PathBuf,
        /// Pretrained classifier checkpoint (finetune mode).
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a manifest split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "val")]
        split: Split,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
    },
    /// Build a feature store from the train split of a manifest.
    Enroll {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify one image.
    Infer {
        #[arg(long)]
        pipeline: Pipeline,
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run inference over a directory of frames, one JSON line per frame.
    Stream {
        #[arg(long)]
        frames_dir: PathBuf,
        #[arg(long, default_value = "detector")]
        pipeline: Pipeline,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Render training curves from a metrics CSV.
    Curves {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        svg: PathBuf,
    },
    /// Serve the annotation API for a dataset directory.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        dataset: PathBuf,
        /// Label map file (default: <dataset>/labelmap.txt).
        #[arg(long)]
        labelmap: Option<PathBuf>,
        /// Directory with the browser UI bundle.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Network checkpoint (cnn and detector pipelines).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Feature store directory (features pipeline).
    #[arg(long)]
    store: Option<PathBuf>,
}

/// Failures that exit with status 1 rather than 2.
struct Usage(String);

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<Usage> for Failure {
    fn from(u: Usage) -> Self {
        Failure::Usage(u.0)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn json_line<T: serde::Serialize>(value: &T) -> std::result::Result<(), Failure> {
    let text = serde_json::to_string(value).map_err(|e| Error::Contract(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

/// `labelmap.txt` beside the manifest, or the manifest's class names.
fn dataset_labels(manifest_path: &Path, manifest: &DatasetManifest) -> Result<LabelMap> {
    let path = manifest_path.parent().unwrap_or(Path::new(".")).join(LABELMAP_FILE);
    if path.is_file() {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        LabelMap::parse_text(&text)
    } else {
        build_label_map(&manifest.class_names())
    }
}

fn load_predictor(pipeline: Pipeline, model: &ModelArgs) -> std::result::Result<Predictor, Failure> {
    match pipeline {
        Pipeline::Features => {
            let dir = model
                .store
                .as_ref()
                .ok_or_else(|| Usage("the features pipeline needs --store".into()))?;
            Ok(Predictor::Features(FeatureStore::load(dir)?))
        }
        Pipeline::Cnn | Pipeline::Detector => {
            let path = model
                .checkpoint
                .as_ref()
                .ok_or_else(|| Usage(format!("the {pipeline:?} pipeline needs --checkpoint").to_lowercase()))?;
            let net = load_checkpoint(path)?.network;
            Ok(if pipeline == Pipeline::Cnn {
                Predictor::Cnn(net)
            } else {
                Predictor::detector(net)
            })
        }
    }
}

fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Gen {
            classes,
            per_class,
            out,
            seed,
        } => {
            let labels = write_synthetic_dataset(&out, classes, per_class, seed)?;
            println!("wrote {} images in {} classes to {}", classes * per_class, labels.len(), out.display());
        }
        Command::Split {
            dataset,
            fraction,
            seed,
            out,
        } => {
            let mut manifest = ingest_directory(&dataset)?;
            manifest.assign_split(fraction, seed)?;
            let out = out.unwrap_or_else(|| dataset.join(MANIFEST_FILE));
            manifest.save(&out)?;
            println!(
                "{} train / {} val -> {}",
                manifest.split_items(Split::Train).len(),
                manifest.split_items(Split::Val).len(),
                out.display()
            );
        }
        Command::Labelmap { names, out } => {
            let text = build_label_map(&names)?.to_text();
            match out {
                Some(path) => fs::write(&path, text).map_err(|e| Error::io(&path, e))?,
                None => print!("{text}"),
            }
        }
        Command::Train {
            mode,
            manifest: manifest_path,
            epochs,
            lr,
            weight_decay,
            seed,
            batch_size,
            checkpoint_every,
            target_accuracy,
            checkpoint_dir,
            pretrained,
        } => {
            let defaults = TrainConfig::for_mode(mode);
            let cfg = TrainConfig {
                epochs: epochs.unwrap_or(defaults.epochs),
                batch_size: batch_size.unwrap_or(defaults.batch_size),
                learning_rate: lr.unwrap_or(defaults.learning_rate),
                weight_decay: weight_decay.unwrap_or(defaults.weight_decay),
                seed: seed.unwrap_or(defaults.seed),
                checkpoint_every,
                mode,
                target_val_accuracy: target_accuracy,
            };
            cfg.validate().map_err(|e| Usage(e.to_string()))?;
            let manifest = DatasetManifest::load(&manifest_path)?;
            let labels = dataset_labels(&manifest_path, &manifest)?.names();
            let net = match mode {
                TrainMode::Classifier => build_classifier(labels.len(), CLASSIFIER_SIDE, cfg.seed)?,
                TrainMode::Detector => build_detector(&DetectorConfig::new(labels.len()), DETECTOR_SIDE, cfg.seed)?,
                TrainMode::Finetune => {
                    let path = pretrained.ok_or_else(|| Usage("finetune mode needs --pretrained".into()))?;
                    prepare_finetune(&load_checkpoint(path)?.network, labels.clone(), cfg.seed)?
                }
            }
            .with_labels(labels);
            let (net, log) = train(net, &manifest, &cfg, Some(&checkpoint_dir))?;
            let final_path = checkpoint_dir.join("final.ckpt");
            let steps = (log.len() * manifest.split_items(Split::Train).len().div_ceil(cfg.batch_size)) as u64;
            save_checkpoint(&net, steps, &final_path)?;
            export_curves(&log, checkpoint_dir.join("metrics.csv"), CurveFormat::Csv)?;
            if let Some(last) = log.rows().last() {
                println!(
                    "epoch {}: train loss {:.4} acc {:.3}, val loss {:.4} acc {:.3} -> {}",
                    last.epoch,
                    last.train_loss,
                    last.train_accuracy,
                    last.val_loss,
                    last.val_accuracy,
                    final_path.display()
                );
            }
        }
        Command::Eval {
            checkpoint,
            manifest: manifest_path,
            split,
            max_steps,
        } => {
            if max_steps == 0 {
                return Err(Usage("--max-steps must be at least 1".into()).into());
            }
            let net = load_checkpoint(&checkpoint)?.network;
            let manifest = DatasetManifest::load(&manifest_path)?;
            let items = load_examples(&manifest, split, &net)?;
            let report = gesture_core::harness::evaluate(&net, &items, &EvalConfig { max_steps })?;
            json_line(&serde_json::json!({
                "evaluated": report.evaluated,
                "accuracy": report.accuracy,
                "mean_loss": report.mean_loss,
                "labels": net.labels,
                "confusion": report.confusion,
            }))?;
        }
        Command::Enroll { manifest: manifest_path, out } => {
            let manifest = DatasetManifest::load(&manifest_path)?;
            let labels = dataset_labels(&manifest_path, &manifest)?.names();
            let mut entries: Vec<(String, Vec<_>)> = labels.iter().map(|l| (l.clone(), Vec::new())).collect();
            for item in manifest.split_items(Split::Train) {
                let img = gesture_core::imaging::ImageU8::load_png(&item.image_path)?;
                match extract_gesture_features(&img) {
                    Ok(v) => {
                        let slot = entries.iter_mut().find(|(l, _)| *l == item.class_name).ok_or_else(|| {
                            Error::Contract(format!("class {:?} is not in the label map", item.class_name))
                        })?;
                        slot.1.push(v);
                    }
                    Err(Error::NoHandRegion) => log::warn!("{}: no hand region, skipped", item.image_path.display()),
                    Err(e) => return Err(e.into()),
                }
            }
            let store = FeatureStore::build(entries)?;
            store.save(&out)?;
            println!("enrolled {} vectors -> {}", store.len(), out.display());
        }
        Command::Infer { pipeline, image, model } => {
            let predictor = load_predictor(pipeline, &model)?;
            json_line(&infer_path(&predictor, &image)?)?;
        }
        Command::Stream {
            frames_dir,
            pipeline,
            model,
        } => {
            let predictor = load_predictor(pipeline, &model)?;
            let mut failure = None;
            run_stream(&predictor, &frames_dir, |record| {
                if failure.is_none() {
                    failure = json_line(&record).err();
                }
            })?;
            if let Some(f) = failure {
                return Err(f);
            }
        }
        Command::Curves { log, svg } => {
            let text = fs::read_to_string(&log).map_err(|e| Error::io(&log, e))?;
            let metrics = MetricsLog::parse_csv(&text)?;
            export_curves(&metrics, &svg, CurveFormat::Svg)?;
            println!("{} epochs -> {}", metrics.len(), svg.display());
        }
        Command::Serve {
            port,
            dataset,
            labelmap,
            static_dir,
        } => {
            let path = labelmap.unwrap_or_else(|| dataset.join(LABELMAP_FILE));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let config = ServiceConfig {
                dataset_root: dataset,
                labels: LabelMap::parse_text(&text)?,
                static_dir,
            };
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
            runtime.block_on(serve(config, SocketAddr::from(([127, 0, 0, 1], port))))?;
        }
    }
    Ok(())
}
