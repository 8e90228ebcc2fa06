use std::fs;
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::imaging::{find_hand, hu_moments, Component, ImageU8, SkinRange};

pub const FEATURE_DIM: usize = 9;

/// Lower bound applied to each per-dimension standard deviation.
pub const STD_FLOOR: f64 = 1e-9;

/// Seven Hu moments, box aspect ratio (w/h), fill ratio (pixels / box area).
pub type FeatureVector = [f64; FEATURE_DIM];

const STATS_FILE: &str = "standardization.txt";

/// Shape features of an already segmented hand region.
pub fn features_from_component(c: &Component) -> Result<FeatureVector> {
    let hu = hu_moments(&c.mask)?;
    let mut v = [0.0; FEATURE_DIM];
    v[..7].copy_from_slice(&hu);
    v[7] = c.bbox.width() as f64 / c.bbox.height() as f64;
    v[8] = c.pixel_count as f64 / c.bbox.area() as f64;
    Ok(v)
}

/// Default segmentation followed by [`features_from_component`].
pub fn extract_gesture_features(img: &ImageU8) -> Result<FeatureVector> {
    features_from_component(&find_hand(img, SkinRange::default())?)
}

/// Per-gesture feature vectors with shared standardization statistics.
///
/// Labels keep their construction order, which also defines the label id used
/// to break exact distance ties.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    labels: Vec<String>,
    vectors: Vec<Vec<FeatureVector>>,
    mean: FeatureVector,
    std: FeatureVector,
    standardized: Vec<Vec<FeatureVector>>,
}

impl FeatureStore {
    /// Builds a store and computes mean/std over every vector it holds.
    pub fn build(entries: Vec<(String, Vec<FeatureVector>)>) -> Result<Self> {
        let all: Vec<&FeatureVector> = entries.iter().flat_map(|(_, v)| v).collect();
        ensure!(!all.is_empty(), "feature store needs at least one vector");
        let n = all.len() as f64;
        let mut mean = [0.0; FEATURE_DIM];
        for v in &all {
            for (m, x) in mean.iter_mut().zip(v.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [0.0; FEATURE_DIM];
        for v in &all {
            for k in 0..FEATURE_DIM {
                std[k] += (v[k] - mean[k]).powi(2);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        Self::with_stats(entries, mean, std)
    }

    /// Builds a store with caller-supplied statistics.
    pub fn with_stats(entries: Vec<(String, Vec<FeatureVector>)>, mean: FeatureVector, std: FeatureVector) -> Result<Self> {
        let mut labels = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        for (label, vs) in entries {
            check_label(&label)?;
            ensure!(!labels.contains(&label), "duplicate feature label {label:?}");
            ensure!(
                vs.iter().all(|v| v.iter().all(|x| x.is_finite())),
                "non-finite feature for {label:?}"
            );
            labels.push(label);
            vectors.push(vs);
        }
        ensure!(
            mean.iter().chain(std.iter()).all(|x| x.is_finite()) && std.iter().all(|s| *s >= 0.0),
            "invalid standardization statistics"
        );
        let std = std.map(|s| s.max(STD_FLOOR));
        let mut store = FeatureStore {
            labels,
            vectors,
            mean,
            std,
            standardized: Vec::new(),
        };
        store.standardized = store
            .vectors
            .iter()
            .map(|vs| vs.iter().map(|v| store.standardize(v)).collect())
            .collect();
        Ok(store)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vectors(&self, label: &str) -> Option<&[FeatureVector]> {
        let i = self.labels.iter().position(|l| l == label)?;
        Some(&self.vectors[i])
    }

    pub fn mean(&self) -> &FeatureVector {
        &self.mean
    }

    pub fn std(&self) -> &FeatureVector {
        &self.std
    }

    pub fn len(&self) -> usize {
        self.vectors.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn standardize(&self, v: &FeatureVector) -> FeatureVector {
        std::array::from_fn(|k| (v[k] - self.mean[k]) / self.std[k])
    }

    /// Label of the closest stored vector and its Euclidean distance in
    /// standardized space. Exact ties go to the earlier label.
    pub fn nearest_match(&self, feat: &FeatureVector) -> Result<(String, f64)> {
        ensure!(!self.is_empty(), "nearest match on an empty feature store");
        let q = self.standardize(feat);
        let mut best: Option<(usize, f64)> = None;
        for (i, vs) in self.standardized.iter().enumerate() {
            for v in vs {
                let d2: f64 = v.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.is_none_or(|(_, bd)| d2 < bd) {
                    best = Some((i, d2));
                }
            }
        }
        let (i, d2) = best.expect("store is non-empty");
        Ok((self.labels[i].clone(), d2.sqrt()))
    }

    /// Writes `<label>.txt` per gesture plus `standardization.txt`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (label, vs) in self.labels.iter().zip(&self.vectors) {
            let text: String = vs.iter().map(|v| format_row(v) + "\n").collect();
            let path = dir.join(format!("{label}.txt"));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        let stats = format!(
            "labels {}\nmean {}\nstd {}\n",
            self.labels.join(" "),
            format_row(&self.mean),
            format_row(&self.std)
        );
        let path = dir.join(STATS_FILE);
        fs::write(&path, stats).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let stats_path = dir.join(STATS_FILE);
        let stats = fs::read_to_string(&stats_path).map_err(|e| Error::io(&stats_path, e))?;
        let mut lines = stats.lines();
        let mut field = |line_no: usize, key: &str| -> Result<Vec<&str>> {
            let line = lines.next().unwrap_or_default();
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {key:?} in {}", stats_path.display()),
                });
            }
            Ok(parts.collect())
        };
        let labels: Vec<String> = field(1, "labels")?.into_iter().map(str::to_owned).collect();
        let mean = parse_row(&field(2, "mean")?.join(" "), 2)?;
        let std = parse_row(&field(3, "std")?.join(" "), 3)?;

        let mut entries = Vec::with_capacity(labels.len());
        for label in labels {
            let path = dir.join(format!("{label}.txt"));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let vs = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| parse_row(l, i + 1))
                .collect::<Result<Vec<_>>>()?;
            entries.push((label, vs));
        }
        Self::with_stats(entries, mean, std)
    }
}

fn check_label(label: &str) -> Result<()> {
    ensure!(
        !label.is_empty()
            && label != "standardization"
            && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'),
        "feature label {label:?} must be a non-empty [A-Za-z0-9_-] name other than \"standardization\""
    );
    Ok(())
}

fn format_row(v: &FeatureVector) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

fn parse_row(line: &str, line_no: usize) -> Result<FeatureVector> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
    values.try_into().map_err(|v: Vec<f64>| Error::Parse {
        line: line_no,
        message: format!("expected {FEATURE_DIM} values, found {}", v.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, SyntheticGestureSpec};
    use crate::imaging::{largest_component, BitMask};
    use proptest::prelude::*;

    fn unit(x: f64) -> FeatureVector {
        let mut v = [0.0; FEATURE_DIM];
        v[0] = x;
        v
    }

    fn identity_store(entries: Vec<(&str, Vec<FeatureVector>)>) -> FeatureStore {
        let entries = entries.into_iter().map(|(l, v)| (l.to_string(), v)).collect();
        FeatureStore::with_stats(entries, [0.0; FEATURE_DIM], [1.0; FEATURE_DIM]).unwrap()
    }

    #[test]
    fn nearest_match_examples() {
        let store = identity_store(vec![("a", vec![unit(0.0)]), ("b", vec![unit(1.0)])]);
        let (label, d) = store.nearest_match(&unit(0.4)).unwrap();
        assert_eq!(label, "a");
        assert!((d - 0.4).abs() < 1e-15);
        assert_eq!(store.nearest_match(&unit(1.0)).unwrap(), ("b".into(), 0.0));
        assert_eq!(store.nearest_match(&unit(0.5)).unwrap().0, "a");

        let tie = identity_store(vec![("z", vec![unit(1.0)]), ("y", vec![unit(-1.0)])]);
        assert_eq!(tie.nearest_match(&unit(0.0)).unwrap().0, "z");

        let empty = identity_store(vec![("a", vec![])]);
        assert!(matches!(empty.nearest_match(&unit(0.0)), Err(Error::Contract(_))));
    }

    #[test]
    fn solid_square_fill_and_aspect() {
        let mut m = BitMask::new(20, 20);
        for y in 5..15 {
            for x in 3..13 {
                m.set(x, y, true);
            }
        }
        let v = features_from_component(&largest_component(&m).unwrap()).unwrap();
        assert_eq!((v[7], v[8]), (1.0, 1.0));
    }

    #[test]
    fn features_are_pure_and_translation_invariant() {
        let sample = gen_synthetic(&SyntheticGestureSpec::new(3), 11).unwrap();
        let a = extract_gesture_features(&sample.image).unwrap();
        assert_eq!(a, extract_gesture_features(&sample.image).unwrap());

        let (w, h) = (sample.image.width(), sample.image.height());
        let mut shifted = ImageU8::filled(w + 7, h + 4, sample.image.pixel(0, 0)).unwrap();
        for y in 0..h {
            for x in 0..w {
                shifted.pixel_mut(x + 7, y + 4).copy_from_slice(sample.image.pixel(x, y));
            }
        }
        let b = extract_gesture_features(&shifted).unwrap();
        for k in 0..7 {
            assert!((a[k] - b[k]).abs() <= 1e-9 * a[k].abs().max(1.0), "hu {k}: {} vs {}", a[k], b[k]);
        }
        assert_eq!((a[7], a[8]), (b[7], b[8]));
    }

    #[test]
    fn no_hand_propagates() {
        let img = ImageU8::filled(16, 16, &[0, 0, 255]).unwrap();
        assert!(matches!(extract_gesture_features(&img), Err(Error::NoHandRegion)));
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = FeatureStore::build(vec![
            ("one".into(), vec![unit(0.1), unit(0.2)]),
            ("two".into(), vec![[0.3; FEATURE_DIM]]),
        ])
        .unwrap();
        store.save(dir.path()).unwrap();
        assert!(dir.path().join("one.txt").exists());
        let text = std::fs::read_to_string(dir.path().join("one.txt")).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().all(|l| l.split(' ').count() == FEATURE_DIM));
        assert_eq!(FeatureStore::load(dir.path()).unwrap(), store);
        assert!(FeatureStore::build(vec![("bad/name".into(), vec![unit(0.0)])]).is_err());
    }

    proptest! {
        #[test]
        fn zero_distance_iff_stored(
            stored in prop::collection::vec(prop::array::uniform9(-5.0f64..5.0), 1..8),
            query in prop::array::uniform9(-5.0f64..5.0),
            pick in any::<prop::sample::Index>(),
        ) {
            let store = FeatureStore::build(vec![("g".into(), stored.clone())]).unwrap();
            let member = stored[pick.index(stored.len())];
            prop_assert_eq!(store.nearest_match(&member).unwrap().1, 0.0);
            let d = store.nearest_match(&query).unwrap().1;
            prop_assert_eq!(d <= 1e-12, stored.contains(&query));
        }
    }
}
