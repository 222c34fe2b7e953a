//! Labeled feature datasets.
//!
//! Labels are opaque strings; classes are enumerated in order of first
//! appearance. CSV files use the header `label,f0,f1,...` with one sample per
//! line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::loss::Triplet;
use crate::seed::{derive_seed, rng_from_seed};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<String>,
}

/// Per-class sample lists, classes in first-appearance order.
#[derive(Debug, Clone)]
pub struct ClassIndex {
    pub names: Vec<String>,
    pub members: Vec<Vec<usize>>,
    /// Class id of every sample.
    pub of_sample: Vec<usize>,
}

impl ClassIndex {
    pub fn num_classes(&self) -> usize {
        self.names.len()
    }
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.nrows() == 0 {
            return Err(Error::EmptyDataset("dataset has no samples".into()));
        }
        if features.ncols() == 0 {
            return Err(Error::Shape("dataset has no feature columns".into()));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericInput("dataset contains non-finite features".into()));
        }
        Ok(LabeledDataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn class_index(&self) -> ClassIndex {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let mut names = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut of_sample = Vec::with_capacity(self.len());
        for (i, label) in self.labels.iter().enumerate() {
            let id = *ids.entry(label.as_str()).or_insert_with(|| {
                names.push(label.clone());
                members.push(Vec::new());
                names.len() - 1
            });
            members[id].push(i);
            of_sample.push(id);
        }
        ClassIndex {
            names,
            members,
            of_sample,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_index().num_classes()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        LabeledDataset::new(features, labels)
    }

    pub fn ensure_no_singletons(&self) -> Result<()> {
        let index = self.class_index();
        if let Some(c) = index.members.iter().position(|m| m.len() < 2) {
            return Err(Error::Precondition(format!(
                "class {:?} has a single sample",
                index.names[c]
            )));
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        let mut header = String::from("label");
        for j in 0..self.dim() {
            header.push_str(&format!(",f{j}"));
        }
        writeln!(out, "{header}").map_err(io)?;
        for (label, row) in self.labels.iter().zip(self.features.rows()) {
            let mut line = label.clone();
            for v in row {
                line.push_str(&format!(",{v}"));
            }
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Parameters of the Gaussian-cluster generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub feature_dim: usize,
    pub center_scale: f64,
    pub spread: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 1 || self.feature_dim < 1 {
            return Err(Error::Config("classes and feature dim must be positive".into()));
        }
        if self.samples_per_class < 2 {
            return Err(Error::Config(format!(
                "need at least 2 samples per class, got {}",
                self.samples_per_class
            )));
        }
        if !(self.center_scale > 0.0 && self.center_scale.is_finite()) {
            return Err(Error::Config(format!(
                "center_scale must be positive, got {}",
                self.center_scale
            )));
        }
        // spread = 0 is accepted and collapses every class onto its center.
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::Config(format!("spread must be >= 0, got {}", self.spread)));
        }
        Ok(())
    }
}

/// Class centers uniform in `[-center_scale, center_scale]^d`, samples
/// `center + spread * N(0, I)`. Labels are `c0`, `c1`, ...; rows are grouped
/// by class.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let d = spec.feature_dim;
    let n = spec.num_classes * spec.samples_per_class;
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for c in 0..spec.num_classes {
        let center: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-spec.center_scale..=spec.center_scale))
            .collect();
        for _ in 0..spec.samples_per_class {
            for (j, &mu) in center.iter().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                features[[row, j]] = mu + spec.spread * z;
            }
            labels.push(format!("c{c}"));
            row += 1;
        }
    }
    LabeledDataset::new(features, labels)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.get(0) != Some("label") {
        return Err(parse_err(1, "first header column must be `label`".into()));
    }
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(parse_err(1, "no feature columns".into()));
    }

    let mut labels = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, format!("malformed row: {e}"))
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let label = &record[0];
        if label.is_empty() {
            return Err(parse_err(line, "empty label".into()));
        }
        labels.push(label.to_string());
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("feature f{j} is not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("feature f{j} is not finite: {field:?}")));
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no samples", path.display())));
    }
    let features = Array2::from_shape_vec((labels.len(), dim), values).expect("rectangular by construction");
    LabeledDataset::new(features, labels)
}

/// Keeps only samples whose class has at least two members, order preserved.
pub fn remove_singletons(ds: &LabeledDataset) -> Result<LabeledDataset> {
    let index = ds.class_index();
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| index.members[index.of_sample[i]].len() >= 2)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyDataset("every class is a singleton".into()));
    }
    ds.subset(&keep)
}

/// Number of classes assigned to the training side.
pub fn train_class_count(num_classes: usize, train_fraction: f64) -> usize {
    // Tolerance keeps products like 0.7 * 10 = 7.000000000000001 from rounding up.
    (train_fraction * num_classes as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Class-disjoint split: classes are shuffled by `seed`, the first
/// `ceil(train_fraction * K)` go to train, the rest to test.
pub fn split_by_class(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let index = ds.class_index();
    let k = index.num_classes();
    if k < 2 {
        return Err(Error::Precondition(format!("need at least 2 classes to split, got {k}")));
    }
    let n_train = train_class_count(k, train_fraction);
    if n_train == 0 || n_train >= k {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} with {k} classes leaves one side empty ({n_train} train classes)"
        )));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut is_train = vec![false; k];
    for &c in &order[..n_train] {
        is_train[c] = true;
    }
    let (train, test): (Vec<usize>, Vec<usize>) =
        (0..ds.len()).partition(|&i| is_train[index.of_sample[i]]);
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// One triplet per sample as anchor, positives and negatives drawn uniformly,
/// then shuffled. Deterministic in `(seed, epoch)`.
pub fn sample_triplets(ds: &LabeledDataset, seed: u64, epoch: u64) -> Result<Vec<Triplet>> {
    ds.ensure_no_singletons()?;
    let index = ds.class_index();
    if index.num_classes() < 2 {
        return Err(Error::Precondition("need at least 2 classes to form negatives".into()));
    }
    let n = ds.len();
    let mut rng = rng_from_seed(derive_seed(seed, &[epoch]));
    let mut triplets = Vec::with_capacity(n);
    for anchor in 0..n {
        let class = index.of_sample[anchor];
        let members = &index.members[class];
        // Uniform over members other than the anchor.
        let pos_in_class = members.iter().position(|&m| m == anchor).expect("anchor in class");
        let mut pick = rng.random_range(0..members.len() - 1);
        if pick >= pos_in_class {
            pick += 1;
        }
        let positive = members[pick];
        // Uniform over all samples outside the class.
        let negative = loop {
            let candidate = rng.random_range(0..n);
            if index.of_sample[candidate] != class {
                break candidate;
            }
        };
        triplets.push(Triplet {
            anchor,
            positive,
            negative,
        });
    }
    triplets.shuffle(&mut rng);
    Ok(triplets)
}
