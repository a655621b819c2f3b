//! Plain-text vector datasets and a seeded synthetic generator that builds
//! a two-level class hierarchy: super-class means, sub-class means around
//! them, and per-sample noise around those. The nesting gives retrieval in
//! the ball something tree-like to represent while staying fully
//! deterministic by seed.
//!
//! The on-disk format is delimited text: one row per sample, first column
//! the integer label, remaining columns the features, delimiter `,`. Lines
//! starting with `#` and blank lines are ignored. Floats are written with 17
//! significant digits so a save/load round trip reproduces every value
//! exactly.

use crate::error::{ChestError, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

/// Which side of the train/test divide a dataset belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Immutable labeled feature matrix with contiguous class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    split: Split,
}

impl VectorDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, split: Split) -> Result<Self> {
        if features.is_empty() {
            return Err(ChestError::InvalidInput("dataset has no rows".into()));
        }
        if features.len() != labels.len() {
            return Err(ChestError::DimensionMismatch {
                context: "dataset labels".into(),
                expected: features.len(),
                got: labels.len(),
            });
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(ChestError::InvalidInput(
                "dataset rows have no features".into(),
            ));
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(ChestError::DimensionMismatch {
                    context: format!("dataset row {i}"),
                    expected: dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ChestError::NonFinite(format!("dataset row {i}")));
            }
        }
        let classes = labels.iter().max().unwrap() + 1;
        let mut seen = vec![false; classes];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(ChestError::InvalidInput(format!(
                "labels must be contiguous in [0, {classes}); class {missing} has no items"
            )));
        }
        Ok(VectorDataset {
            features,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features[0].len()
    }

    /// Number of distinct classes; labels cover `[0, classes)` exactly.
    pub fn classes(&self) -> usize {
        self.labels.iter().max().unwrap() + 1
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Items per class, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Parameters of the synthetic two-level hierarchy generator.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchySpec {
    pub super_classes: usize,
    pub sub_per_super: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub input_dim: usize,
    /// Spread of super-class means around the origin.
    pub super_scale: f64,
    /// Spread of sub-class means around their super-class mean.
    pub sub_scale: f64,
    /// Per-sample noise around the sub-class mean.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for HierarchySpec {
    fn default() -> Self {
        HierarchySpec {
            super_classes: 2,
            sub_per_super: 4,
            train_per_class: 100,
            test_per_class: 50,
            input_dim: 64,
            super_scale: 4.0,
            sub_scale: 1.0,
            noise_scale: 0.25,
            seed: 0,
        }
    }
}

impl HierarchySpec {
    /// Total class count `C = super_classes x sub_per_super`.
    pub fn classes(&self) -> usize {
        self.super_classes * self.sub_per_super
    }

    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        for (name, v) in [
            ("data.super_classes", self.super_classes),
            ("data.sub_per_super", self.sub_per_super),
            ("data.train_per_class", self.train_per_class),
            ("data.test_per_class", self.test_per_class),
            ("data.input_dim", self.input_dim),
        ] {
            if v == 0 {
                violations.push(format!("{name} must be positive"));
            }
        }
        if self.classes() < 2 {
            violations.push(format!(
                "data.super_classes x data.sub_per_super must be at least 2, got {}",
                self.classes()
            ));
        }
        for (name, v) in [
            ("data.super_scale", self.super_scale),
            ("data.sub_scale", self.sub_scale),
            ("data.noise_scale", self.noise_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                violations.push(format!("{name} must be finite and positive, got {v}"));
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ChestError::Config(violations))
        }
    }
}

/// Draws the hierarchy: super means `N(0, super_scale^2 I)`, sub means
/// around them, samples around those. Class index is
/// `super_idx * sub_per_super + sub_idx`; train and test rows are drawn
/// independently per class.
pub fn generate_hierarchy(spec: &HierarchySpec) -> Result<(VectorDataset, VectorDataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let super_dist = Normal::new(0.0, spec.super_scale).expect("validated scale");
    let sub_dist = Normal::new(0.0, spec.sub_scale).expect("validated scale");
    let noise_dist = Normal::new(0.0, spec.noise_scale).expect("validated scale");
    let dim = spec.input_dim;
    let draw = |rng: &mut ChaCha8Rng, dist: &Normal<f64>| -> Vec<f64> {
        (0..dim).map(|_| dist.sample(rng)).collect()
    };

    let classes = spec.classes();
    let mut train_rows = Vec::with_capacity(classes * spec.train_per_class);
    let mut train_labels = Vec::with_capacity(classes * spec.train_per_class);
    let mut test_rows = Vec::with_capacity(classes * spec.test_per_class);
    let mut test_labels = Vec::with_capacity(classes * spec.test_per_class);

    for s in 0..spec.super_classes {
        let super_mean = draw(&mut rng, &super_dist);
        for b in 0..spec.sub_per_super {
            let offset = draw(&mut rng, &sub_dist);
            let sub_mean: Vec<f64> = super_mean.iter().zip(&offset).map(|(m, o)| m + o).collect();
            let class = s * spec.sub_per_super + b;
            for _ in 0..spec.train_per_class {
                let noise = draw(&mut rng, &noise_dist);
                train_rows.push(sub_mean.iter().zip(&noise).map(|(m, n)| m + n).collect());
                train_labels.push(class);
            }
            for _ in 0..spec.test_per_class {
                let noise = draw(&mut rng, &noise_dist);
                test_rows.push(sub_mean.iter().zip(&noise).map(|(m, n)| m + n).collect());
                test_labels.push(class);
            }
        }
    }

    Ok((
        VectorDataset::new(train_rows, train_labels, Split::Train)?,
        VectorDataset::new(test_rows, test_labels, Split::Test)?,
    ))
}

/// How raw file labels were renumbered into the contiguous range.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMapping {
    mapping: BTreeMap<i64, usize>,
}

impl LabelMapping {
    pub fn contiguous(&self, original: i64) -> Option<usize> {
        self.mapping.get(&original).copied()
    }

    /// Pairs `(original, contiguous)` in ascending original order.
    pub fn pairs(&self) -> Vec<(i64, usize)> {
        self.mapping.iter().map(|(&o, &c)| (o, c)).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().all(|(&o, &c)| o == c as i64)
    }
}

impl std::fmt::Display for LabelMapping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .mapping
            .iter()
            .map(|(o, c)| format!("{o} -> {c}"))
            .collect();
        write!(f, "{}", parts.join(", "))
    }
}

/// Writes the delimited-text form with a leading comment describing the
/// shape. Feature values keep full precision.
pub fn save_dataset(dataset: &VectorDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# split={} rows={} input_dim={} classes={}\n",
        dataset.split(),
        dataset.len(),
        dataset.input_dim(),
        dataset.classes()
    ));
    for (row, &label) in dataset.features().iter().zip(dataset.labels()) {
        out.push_str(&label.to_string());
        for v in row {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parses the delimited-text form. File labels may be arbitrary integers;
/// they are remapped to `[0, C)` in ascending order and the mapping is
/// returned alongside the dataset.
pub fn load_dataset(path: &Path, split: Split) -> Result<(VectorDataset, LabelMapping)> {
    let text = std::fs::read_to_string(path)?;
    let parse = |line: usize, message: String| ChestError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };

    let mut raw_labels = Vec::new();
    let mut rows = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split(',');
        let label_s = fields.next().unwrap();
        let label: i64 = label_s
            .trim()
            .parse()
            .map_err(|e| parse(line_no, format!("bad label {label_s:?}: {e}")))?;
        let mut row = Vec::new();
        for f in fields {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|e| parse(line_no, format!("bad feature {f:?}: {e}")))?;
            if !v.is_finite() {
                return Err(parse(line_no, "non-finite feature value".into()));
            }
            row.push(v);
        }
        if row.is_empty() {
            return Err(parse(line_no, "row has a label but no features".into()));
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(parse(
                    line_no,
                    format!("row has {} features, earlier rows have {d}", row.len()),
                ));
            }
            Some(_) => {}
        }
        raw_labels.push(label);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse(text.lines().count() + 1, "no data rows".into()));
    }

    let distinct: std::collections::BTreeSet<i64> = raw_labels.iter().copied().collect();
    let mapping: BTreeMap<i64, usize> = distinct
        .into_iter()
        .enumerate()
        .map(|(c, o)| (o, c))
        .collect();
    let labels: Vec<usize> = raw_labels.iter().map(|l| mapping[l]).collect();
    let dataset = VectorDataset::new(rows, labels, split)?;
    Ok((dataset, LabelMapping { mapping }))
}

/// Exact-row disjointness between two datasets, comparing feature bits.
pub fn splits_are_disjoint(a: &VectorDataset, b: &VectorDataset) -> bool {
    let key = |row: &[f64]| -> Vec<u64> { row.iter().map(|v| v.to_bits()).collect() };
    let seen: HashSet<Vec<u64>> = a.features().iter().map(|r| key(r)).collect();
    !b.features().iter().any(|r| seen.contains(&key(r)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_invariants_are_enforced() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert!(VectorDataset::new(vec![], vec![], Split::Train).is_err());
        assert!(VectorDataset::new(rows.clone(), vec![0], Split::Train).is_err());
        assert!(matches!(
            VectorDataset::new(vec![vec![1.0], vec![2.0, 3.0]], vec![0, 0], Split::Train),
            Err(ChestError::DimensionMismatch { .. })
        ));
        assert!(VectorDataset::new(
            vec![vec![f64::NAN, 0.0], rows[1].clone()],
            vec![0, 0],
            Split::Train
        )
        .is_err());
        // Label 1 absent: not contiguous.
        assert!(VectorDataset::new(rows.clone(), vec![0, 2], Split::Train).is_err());

        let ds = VectorDataset::new(rows, vec![1, 0], Split::Test).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.classes(), 2);
        assert_eq!(ds.input_dim(), 2);
        assert_eq!(ds.class_counts(), vec![1, 1]);
        assert_eq!(ds.split(), Split::Test);
    }

    #[test]
    fn generator_counts_match_spec() {
        let spec = HierarchySpec::default();
        let (train, test) = generate_hierarchy(&spec).unwrap();
        assert_eq!(train.len(), 800);
        assert_eq!(test.len(), 400);
        assert_eq!(train.classes(), 8);
        assert_eq!(test.classes(), 8);
        assert_eq!(train.input_dim(), 64);
        assert_eq!(train.class_counts(), vec![100; 8]);
        assert_eq!(test.class_counts(), vec![50; 8]);
        assert_eq!(train.split(), Split::Train);
        assert_eq!(test.split(), Split::Test);
    }

    #[test]
    fn generator_is_seed_deterministic_and_seed_sensitive() {
        let spec = HierarchySpec {
            train_per_class: 5,
            test_per_class: 3,
            input_dim: 8,
            ..HierarchySpec::default()
        };
        let (a_train, a_test) = generate_hierarchy(&spec).unwrap();
        let (b_train, b_test) = generate_hierarchy(&spec).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);

        let other = HierarchySpec { seed: 1, ..spec };
        let (c_train, _) = generate_hierarchy(&other).unwrap();
        assert_ne!(a_train, c_train);
    }

    #[test]
    fn generated_splits_are_disjoint() {
        let (train, test) = generate_hierarchy(&HierarchySpec::default()).unwrap();
        assert!(splits_are_disjoint(&train, &test));
        assert!(!splits_are_disjoint(&train, &train));
    }

    #[test]
    fn nearest_centroid_separates_generated_classes() {
        let (train, test) = generate_hierarchy(&HierarchySpec::default()).unwrap();
        let classes = train.classes();
        let dim = train.input_dim();
        let mut centroids = vec![vec![0.0; dim]; classes];
        let counts = train.class_counts();
        for (row, &label) in train.features().iter().zip(train.labels()) {
            for (acc, v) in centroids[label].iter_mut().zip(row) {
                *acc += v;
            }
        }
        for (centroid, &count) in centroids.iter_mut().zip(&counts) {
            for v in centroid.iter_mut() {
                *v /= count as f64;
            }
        }
        let mut correct = 0;
        for (row, &label) in test.features().iter().zip(test.labels()) {
            let nearest = (0..classes)
                .min_by(|&a, &b| {
                    let da: f64 = centroids[a]
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c - v) * (c - v))
                        .sum();
                    let db: f64 = centroids[b]
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c - v) * (c - v))
                        .sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if nearest == label {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / test.len() as f64;
        assert!(accuracy >= 0.99, "nearest-centroid accuracy {accuracy}");
    }

    #[test]
    fn hierarchy_spec_validation_collects_violations() {
        let bad = HierarchySpec {
            super_classes: 1,
            sub_per_super: 1,
            noise_scale: 0.0,
            ..HierarchySpec::default()
        };
        match bad.validate() {
            Err(ChestError::Config(v)) => {
                assert!(v.iter().any(|m| m.contains("at least 2")));
                assert!(v.iter().any(|m| m.contains("noise_scale")));
            }
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let spec = HierarchySpec {
            train_per_class: 4,
            test_per_class: 2,
            input_dim: 5,
            ..HierarchySpec::default()
        };
        let (train, _) = generate_hierarchy(&spec).unwrap();
        save_dataset(&train, &path).unwrap();
        let (loaded, mapping) = load_dataset(&path, Split::Train).unwrap();
        assert_eq!(loaded, train);
        assert!(mapping.is_identity());
    }

    #[test]
    fn loader_remaps_sparse_labels_and_reports_the_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sparse.csv");
        std::fs::write(
            &path,
            "# header comment\n9,1.0,2.0\n5,3.0,4.0\n\n9,5.0,6.0\n",
        )
        .unwrap();
        let (ds, mapping) = load_dataset(&path, Split::Train).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels(), &[1, 0, 1]);
        assert_eq!(mapping.pairs(), vec![(5, 0), (9, 1)]);
        assert_eq!(mapping.contiguous(9), Some(1));
        assert!(!mapping.is_identity());
        assert_eq!(mapping.to_string(), "5 -> 0, 9 -> 1");
    }

    #[test]
    fn loader_errors_cite_the_offending_line() {
        let dir = tempfile::tempdir().unwrap();

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "0,1.0,2.0\n1,3.0,4.0,5.0\n").unwrap();
        match load_dataset(&ragged, Split::Train) {
            Err(ChestError::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("3 features"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        let bad_value = dir.path().join("bad_value.csv");
        std::fs::write(&bad_value, "0,1.0\n0,oops\n").unwrap();
        match load_dataset(&bad_value, Split::Train) {
            Err(ChestError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }

        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "# nothing but comments\n").unwrap();
        assert!(matches!(
            load_dataset(&empty, Split::Train),
            Err(ChestError::Parse { .. })
        ));

        let label_only = dir.path().join("label_only.csv");
        std::fs::write(&label_only, "0\n").unwrap();
        assert!(matches!(
            load_dataset(&label_only, Split::Train),
            Err(ChestError::Parse { line: 1, .. })
        ));
    }
}
