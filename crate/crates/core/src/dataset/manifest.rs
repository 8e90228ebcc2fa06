use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::split::split_dataset;
use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestItem {
    pub image_id: String,
    pub image_path: PathBuf,
    pub class_name: String,
    pub split: Split,
}

impl ManifestItem {
    /// YOLO sidecar next to the image (same stem, `.txt`).
    pub fn annotation_path(&self) -> PathBuf {
        self.image_path.with_extension("txt")
    }
}

/// A file that ingestion saw but did not take.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub items: Vec<ManifestItem>,
    pub seed: u64,
    pub skipped: Vec<SkippedFile>,
}

const SIDECAR_EXTENSIONS: [&str; 2] = ["txt", "xml"];

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn is_hidden(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with('.'))
}

/// Reads `root/<class_name>/<image>.png`. Class directories are visited in
/// lexicographic order and files within them likewise. Every item starts in
/// the training split.
pub fn ingest_directory(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let ingest_err = |dir: &Path, message: &str| Error::Ingest {
        dir: dir.to_path_buf(),
        message: message.into(),
    };
    if !root.is_dir() {
        return Err(ingest_err(root, "dataset root is not a directory"));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?
        .into_iter()
        .filter(|p| p.is_dir() && !is_hidden(p))
        .collect();
    if class_dirs.is_empty() {
        return Err(ingest_err(root, "no class directories"));
    }
    let mut manifest = DatasetManifest::default();
    for dir in class_dirs {
        let class_name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| ingest_err(&dir, "class directory name is not UTF-8"))?
            .to_string();
        let before = manifest.items.len();
        for path in sorted_entries(&dir)? {
            if is_hidden(&path) {
                continue;
            }
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .map(str::to_ascii_lowercase);
            match ext.as_deref() {
                Some("png") if path.is_file() => {
                    let image_id = path
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or_default()
                        .to_string();
                    manifest.items.push(ManifestItem {
                        image_id,
                        image_path: path,
                        class_name: class_name.clone(),
                        split: Split::Train,
                    });
                }
                Some(e) if SIDECAR_EXTENSIONS.contains(&e) => {}
                _ => {
                    log::warn!("skipping {}: not a .png image", path.display());
                    manifest.skipped.push(SkippedFile {
                        path,
                        reason: "not a .png image".into(),
                    });
                }
            }
        }
        if manifest.items.len() == before {
            return Err(ingest_err(&dir, "class directory contains no images"));
        }
    }
    Ok(manifest)
}

impl DatasetManifest {
    /// Reassigns splits with [`split_dataset`] over the current item order.
    pub fn assign_split(&mut self, train_fraction: f64, seed: u64) -> Result<()> {
        let indices: Vec<usize> = (0..self.items.len()).collect();
        let (train, _) = split_dataset(&indices, train_fraction, seed)?;
        for item in &mut self.items {
            item.split = Split::Val;
        }
        for i in train {
            self.items[i].split = Split::Train;
        }
        self.seed = seed;
        Ok(())
    }

    pub fn split_items(&self, split: Split) -> Vec<&ManifestItem> {
        self.items.iter().filter(|i| i.split == split).collect()
    }

    /// Distinct class names in first-appearance order.
    pub fn class_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for item in &self.items {
            if !names.contains(&item.class_name) {
                names.push(item.class_name.clone());
            }
        }
        names
    }

    /// `id<TAB>path<TAB>class<TAB>split` lines after a `# seed=<n>` header.
    pub fn to_text(&self) -> String {
        let mut out = format!("# seed={}\n", self.seed);
        for item in &self.items {
            out += &format!(
                "{}\t{}\t{}\t{}\n",
                item.image_id,
                item.image_path.display(),
                item.class_name,
                item.split
            );
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut manifest = DatasetManifest::default();
        for (i, line) in text.lines().enumerate() {
            let err = |message: String| Error::Parse { line: i + 1, message };
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(seed) = comment.trim().strip_prefix("seed=") {
                    manifest.seed = seed
                        .parse()
                        .map_err(|_| err(format!("bad seed {seed:?}")))?;
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
            }
            manifest.items.push(ManifestItem {
                image_id: fields[0].to_string(),
                image_path: PathBuf::from(fields[1]),
                class_name: fields[2].to_string(),
                split: fields[3].parse().map_err(err)?,
            });
        }
        Ok(manifest)
    }

    /// Image paths under the manifest's directory are stored relative to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let mut relative = self.clone();
        for item in &mut relative.items {
            if let Ok(rel) = item.image_path.strip_prefix(base) {
                item.image_path = rel.to_path_buf();
            }
        }
        fs::write(path, relative.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Relative image paths are resolved against the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest = Self::parse_text(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for item in &mut manifest.items {
            if item.image_path.is_relative() {
                item.image_path = base.join(&item.image_path);
            }
        }
        ensure!(!manifest.items.is_empty(), "manifest {} lists no items", path.display());
        Ok(manifest)
    }
}
