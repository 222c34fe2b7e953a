//! Verification and retrieval metrics.
//!
//! AUC-ROC uses a class-balanced pair protocol: for every class one anchor is
//! drawn, paired once with another sample of its class and once with a sample
//! of a different class. Recall@k is leave-one-out nearest-neighbor retrieval
//! over the whole evaluation set.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::loss::squared_distance;
use crate::numerics::EmbeddingModel;
use crate::seed::rng_from_seed;
use crate::{Error, Result};

pub const DEFAULT_RECALL_KS: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalPair {
    pub first: usize,
    pub second: usize,
    pub is_positive: bool,
}

/// One positive and one negative pair per class, sharing the class anchor.
/// Classes are visited in first-appearance order.
pub fn generate_eval_pairs(ds: &LabeledDataset, seed: u64) -> Result<Vec<EvalPair>> {
    ds.ensure_no_singletons()?;
    let index = ds.class_index();
    let k = index.num_classes();
    if k < 2 {
        return Err(Error::Precondition(format!(
            "pair protocol needs at least 2 classes, got {k}"
        )));
    }
    let n = ds.len();
    let mut rng = rng_from_seed(seed);
    let mut pairs = Vec::with_capacity(2 * k);
    for (class, members) in index.members.iter().enumerate() {
        let a = rng.random_range(0..members.len());
        let mut p = rng.random_range(0..members.len() - 1);
        if p >= a {
            p += 1;
        }
        let negative = loop {
            let candidate = rng.random_range(0..n);
            if index.of_sample[candidate] != class {
                break candidate;
            }
        };
        let anchor = members[a];
        pairs.push(EvalPair {
            first: anchor,
            second: members[p],
            is_positive: true,
        });
        pairs.push(EvalPair {
            first: anchor,
            second: negative,
            is_positive: false,
        });
    }
    Ok(pairs)
}

/// Embedding distance of each pair.
pub fn pair_distances(embeddings: ArrayView2<f64>, pairs: &[EvalPair]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|p| {
            if p.first >= embeddings.nrows() || p.second >= embeddings.nrows() {
                return Err(Error::Shape(format!(
                    "pair ({}, {}) out of range for {} embeddings",
                    p.first,
                    p.second,
                    embeddings.nrows()
                )));
            }
            let a = embeddings.row(p.first);
            let b = embeddings.row(p.second);
            Ok(squared_distance_view(a, b).sqrt())
        })
        .collect()
}

fn squared_distance_view(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    match (a.as_slice(), b.as_slice()) {
        (Some(x), Some(y)) => squared_distance(x, y),
        _ => a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum(),
    }
}

/// Probability that a random positive pair is strictly closer than a random
/// negative pair, ties worth one half. Computed from average ranks
/// (normalized Mann-Whitney U).
pub fn auc_roc(pairs: &[EvalPair], distances: &[f64]) -> Result<f64> {
    if pairs.len() != distances.len() {
        return Err(Error::Shape(format!(
            "{} pairs but {} distances",
            pairs.len(),
            distances.len()
        )));
    }
    if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::Input(format!("distances must be finite and >= 0, got {d}")));
    }
    let n_pos = pairs.iter().filter(|p| p.is_positive).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both pair kinds ({n_pos} positive, {n_neg} negative)"
        )));
    }

    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&i, &j| distances[i].total_cmp(&distances[j]));

    // Sum of 1-based average ranks of the negatives.
    let mut negative_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && distances[order[end]] == distances[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let negatives = order[start..end].iter().filter(|&&i| !pairs[i].is_positive).count();
        negative_rank_sum += avg_rank * negatives as f64;
        start = end;
    }
    let u = negative_rank_sum - (n_neg * (n_neg + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Fraction of samples with at least one same-class sample among their `k`
/// nearest other samples. Neighbor ties go to the lower index.
pub fn recall_at_k<L: PartialEq + Sync>(
    embeddings: ArrayView2<f64>,
    labels: &[L],
    k: usize,
) -> Result<f64> {
    let n = embeddings.nrows();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} embeddings but {} labels", labels.len())));
    }
    if n < 2 {
        return Err(Error::Precondition("Recall@k needs at least 2 samples".into()));
    }
    if k == 0 || k >= n {
        return Err(Error::Config(format!("k must lie in [1, {}], got {k}", n - 1)));
    }
    let hits: usize = (0..n)
        .into_par_iter()
        .map(|a| {
            let anchor = embeddings.row(a);
            let mut candidates: Vec<(f64, usize)> = (0..n)
                .filter(|&b| b != a)
                .map(|b| (squared_distance_view(anchor, embeddings.row(b)).sqrt(), b))
                .collect();
            let by_distance_then_index =
                |x: &(f64, usize), y: &(f64, usize)| -> Ordering { x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)) };
            if k < candidates.len() {
                candidates.select_nth_unstable_by(k - 1, by_distance_then_index);
            }
            usize::from(candidates[..k].iter().any(|&(_, b)| labels[b] == labels[a]))
        })
        .sum();
    Ok(hits as f64 / n as f64)
}

/// AUC plus Recall@k for a set of `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub auc: f64,
    pub recall_at: BTreeMap<usize, f64>,
}

impl MetricReport {
    /// `auc=<v>` then `recall@<k>=<v>` lines, six decimals.
    pub fn to_kv_text(&self) -> String {
        let mut out = format!("auc={:.6}\n", self.auc);
        for (k, v) in &self.recall_at {
            let _ = writeln!(out, "recall@{k}={v:.6}");
        }
        out
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut auc = None;
        let mut recall_at = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Input(format!("metric line {}: unrecognized `{line}`", i + 1));
            let (key, value) = line.split_once('=').ok_or_else(bad)?;
            let value: f64 = value.parse().map_err(|_| bad())?;
            if key == "auc" {
                auc = Some(value);
            } else if let Some(k) = key.strip_prefix("recall@") {
                recall_at.insert(k.parse().map_err(|_| bad())?, value);
            } else {
                return Err(bad());
            }
        }
        let auc = auc.ok_or_else(|| Error::Input("metric report lacks `auc`".into()))?;
        Ok(MetricReport { auc, recall_at })
    }
}

/// Embeds the dataset with `model` and computes the report on fixed pairs.
pub fn evaluate(
    model: &EmbeddingModel,
    ds: &LabeledDataset,
    pairs: &[EvalPair],
    ks: &[usize],
) -> Result<MetricReport> {
    let embeddings = model.forward(ds.features().view())?.rows;
    metrics_from_embeddings(&embeddings, ds.labels(), pairs, ks)
}

pub fn metrics_from_embeddings(
    embeddings: &Array2<f64>,
    labels: &[String],
    pairs: &[EvalPair],
    ks: &[usize],
) -> Result<MetricReport> {
    let distances = pair_distances(embeddings.view(), pairs)?;
    let auc = auc_roc(pairs, &distances)?;
    let mut recall_at = BTreeMap::new();
    for &k in ks {
        recall_at.insert(k, recall_at_k(embeddings.view(), labels, k)?);
    }
    Ok(MetricReport { auc, recall_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use ndarray::array;

    fn pairs_from(pos: &[f64], neg: &[f64]) -> (Vec<EvalPair>, Vec<f64>) {
        let mut pairs = Vec::new();
        let mut d = Vec::new();
        for (i, &v) in pos.iter().enumerate() {
            pairs.push(EvalPair { first: i, second: i, is_positive: true });
            d.push(v);
        }
        for (i, &v) in neg.iter().enumerate() {
            pairs.push(EvalPair { first: i, second: i, is_positive: false });
            d.push(v);
        }
        (pairs, d)
    }

    #[test]
    fn auc_examples() {
        let (p, d) = pairs_from(&[0.1, 0.2], &[0.8, 0.9]);
        assert_eq!(auc_roc(&p, &d).unwrap(), 1.0);
        let (p, d) = pairs_from(&[0.5], &[0.5]);
        assert_eq!(auc_roc(&p, &d).unwrap(), 0.5);
        // 0.1 < 0.4, 0.1 < 0.9, 0.7 > 0.4, 0.7 < 0.9 → 3/4
        let (p, d) = pairs_from(&[0.1, 0.7], &[0.4, 0.9]);
        assert_eq!(auc_roc(&p, &d).unwrap(), 0.75);
    }

    #[test]
    fn auc_errors() {
        let (p, d) = pairs_from(&[0.1, 0.2], &[]);
        assert!(matches!(auc_roc(&p, &d), Err(Error::UndefinedMetric(_))));
        let (p, d) = pairs_from(&[0.1], &[0.2]);
        assert!(matches!(auc_roc(&p, &d[..1]), Err(Error::Shape(_))));
        assert!(matches!(auc_roc(&p, &[0.1, f64::NAN]), Err(Error::Input(_))));
    }

    #[test]
    fn recall_examples() {
        let two = array![[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(recall_at_k(two.view(), &["a", "a"], 1).unwrap(), 1.0);

        let line = array![[0.0], [1.0], [2.0], [3.0]];
        let labels = ["A", "B", "A", "B"];
        // Sample 1 is equidistant from 0 and 2; the lower index (0, class A) wins.
        assert_eq!(recall_at_k(line.view(), &labels, 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(line.view(), &labels, 2).unwrap(), 0.5);
        assert_eq!(recall_at_k(line.view(), &labels, 3).unwrap(), 1.0);
        assert!(matches!(recall_at_k(line.view(), &labels, 4), Err(Error::Config(_))));
        assert!(matches!(recall_at_k(line.view(), &labels, 0), Err(Error::Config(_))));
    }

    #[test]
    fn pair_protocol() {
        let ds = generate_synthetic(
            &SyntheticSpec {
                num_classes: 7,
                samples_per_class: 3,
                feature_dim: 2,
                center_scale: 1.0,
                spread: 0.1,
            },
            0,
        )
        .unwrap();
        let pairs = generate_eval_pairs(&ds, 4).unwrap();
        assert_eq!(pairs.len(), 14);
        assert_eq!(pairs.iter().filter(|p| p.is_positive).count(), 7);
        let labels = ds.labels();
        for chunk in pairs.chunks(2) {
            let (pos, neg) = (chunk[0], chunk[1]);
            assert!(pos.is_positive && !neg.is_positive);
            assert_eq!(pos.first, neg.first);
            assert_ne!(pos.first, pos.second);
            assert_eq!(labels[pos.first], labels[pos.second]);
            assert_ne!(labels[neg.first], labels[neg.second]);
        }
        assert_eq!(pairs, generate_eval_pairs(&ds, 4).unwrap());
    }

    #[test]
    fn pair_protocol_rejects_singletons() {
        let ds = LabeledDataset::new(
            array![[0.0], [1.0], [2.0]],
            vec!["a".into(), "a".into(), "b".into()],
        )
        .unwrap();
        assert!(matches!(generate_eval_pairs(&ds, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn report_text_format() {
        let mut recall_at = BTreeMap::new();
        recall_at.insert(1, 0.5);
        recall_at.insert(8, 1.0);
        let r = MetricReport { auc: 0.123456789, recall_at };
        let text = r.to_kv_text();
        assert_eq!(text, "auc=0.123457\nrecall@1=0.500000\nrecall@8=1.000000\n");
        let back = MetricReport::from_kv_text(&text).unwrap();
        assert_eq!(back.recall_at, r.recall_at);
        assert!((back.auc - 0.123457).abs() < 1e-12);
        assert!(MetricReport::from_kv_text("recall@1=0.5\n").is_err());
    }
}
