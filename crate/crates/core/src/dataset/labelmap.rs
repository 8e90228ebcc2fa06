use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub id: usize,
    pub name: String,
}

/// Class names with ids `1..=N` in listed order.
///
/// YOLO sidecars use zero-based class indices; class index `i` is the entry
/// with id `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelMap {
    entries: Vec<LabelEntry>,
}

pub fn build_label_map<S: AsRef<str>>(names: &[S]) -> Result<LabelMap> {
    let mut entries: Vec<LabelEntry> = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let name = name.as_ref();
        ensure!(!name.trim().is_empty(), "label {} is empty", i + 1);
        ensure!(
            !name.contains(['\t', '\n', '\r']),
            "label {name:?} contains a tab or newline"
        );
        ensure!(
            entries.iter().all(|e| e.name != name),
            "duplicate label {name:?}"
        );
        entries.push(LabelEntry {
            id: i + 1,
            name: name.to_string(),
        });
    }
    Ok(LabelMap { entries })
}

impl LabelMap {
    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.id)
    }

    /// Zero-based class index of a label, as used in YOLO sidecars.
    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.id_of(name).map(|id| id - 1)
    }

    pub fn name_of_class(&self, class_index: usize) -> Option<&str> {
        self.entries.get(class_index).map(|e| e.name.as_str())
    }

    /// One `id<TAB>name` line per entry.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\n", e.id, e.name))
            .collect()
    }

    pub fn parse_text(text: &str) -> Result<LabelMap> {
        let mut names = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let (id, name) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `id<TAB>name`".into()))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("label id {id:?} is not an integer")))?;
            if id != names.len() + 1 {
                return Err(parse_err(format!("expected id {}, found {id}", names.len() + 1)));
            }
            names.push(name.to_string());
        }
        build_label_map(&names)
    }
}
