//! Training loop and per-epoch statistics.
//!
//! Each epoch samples one triplet per training sample, processes them in
//! mini-batches (mean gradient, one Adam step per batch) at the margin the
//! scheduler produced after the previous epoch, and records every triplet's
//! effective margin and loss as it was computed. The epoch's easy proportion
//! then advances the scheduler.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{sample_triplets, LabeledDataset};
use crate::eval::{evaluate, generate_eval_pairs, EvalPair, MetricReport, DEFAULT_RECALL_KS};
use crate::loss::{classify_loss, triplet_loss_grad, Difficulty, Triplet};
use crate::numerics::{adam_step, init_model, AdamConfig, AdamState, EmbeddingModel, ModelGrads};
use crate::scheduler::{MarginScheduler, SchedulerConfig, SchedulerKind, SchedulerState};
use crate::seed::derive_seed;
use crate::{Error, Result};

/// Histogram covers `[-2, 2)` in bins of 0.1, plus one bin for μ̂ ≥ 2.
pub const HISTOGRAM_LO: f64 = -2.0;
pub const HISTOGRAM_WIDTH: f64 = 0.1;
pub const HISTOGRAM_BINS: usize = 40;

/// Seed streams derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_TRIPLETS: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
    pub ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 0,
            ks: DEFAULT_RECALL_KS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_triplets: usize,
    pub learning_rate: f64,
    pub mining: bool,
    pub seed: u64,
    pub model_dims: Vec<usize>,
    /// Evaluate every this many epochs; 0 evaluates only after the last one.
    pub eval_every: usize,
    pub scheduler: SchedulerConfig,
    pub eval: EvalConfig,
}

impl TrainConfig {
    /// 100 epochs, 64 triplets per step, lr 0.001, mining on.
    pub fn new(model_dims: Vec<usize>, scheduler: SchedulerConfig) -> Self {
        TrainConfig {
            epochs: 100,
            batch_triplets: 64,
            learning_rate: 0.001,
            mining: true,
            seed: 0,
            model_dims,
            eval_every: 0,
            scheduler,
            eval: EvalConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_triplets == 0 {
            return Err(Error::Config("batch_triplets must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(Error::Config(format!("recall ks must be positive, got {:?}", self.eval.ks)));
        }
        self.scheduler.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub margin_used: f64,
    pub mean_loss: f64,
    pub easy_proportion: f64,
    pub median_effective_margin: f64,
    /// `HISTOGRAM_BINS` regular bins followed by the μ̂ ≥ 2 bin.
    pub histogram: Vec<u64>,
    pub triplet_count: usize,
}

/// Lower and upper edge of histogram bin `i`; the last bin is `[2, 2]`.
pub fn histogram_bin_edges(i: usize) -> (f64, f64) {
    if i >= HISTOGRAM_BINS {
        let top = HISTOGRAM_LO + HISTOGRAM_WIDTH * HISTOGRAM_BINS as f64;
        (top, top)
    } else {
        // Integer tenths keep edges like 0.3 free of accumulated error.
        let lo = (i as f64 - 20.0) / 10.0;
        let hi = (i as f64 - 19.0) / 10.0;
        (lo, hi)
    }
}

fn histogram_bin(effective_margin: f64) -> usize {
    let pos = ((effective_margin - HISTOGRAM_LO) / HISTOGRAM_WIDTH).floor();
    if pos < 0.0 {
        0
    } else if pos >= HISTOGRAM_BINS as f64 {
        HISTOGRAM_BINS
    } else {
        pos as usize
    }
}

/// What the loop recorded for one triplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub effective_margin: f64,
    pub loss: f64,
}

pub fn epoch_stats_from_observations(
    epoch: usize,
    margin_used: f64,
    observations: &[Observation],
) -> Result<EpochStats> {
    if observations.is_empty() {
        return Err(Error::Input("no observations for epoch statistics".into()));
    }
    let n = observations.len();
    let easy = observations
        .iter()
        .filter(|o| classify_loss(o.loss) == Difficulty::Easy)
        .count();
    let mean_loss = observations.iter().map(|o| o.loss).sum::<f64>() / n as f64;

    let mut margins: Vec<f64> = observations.iter().map(|o| o.effective_margin).collect();
    margins.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        margins[n / 2]
    } else {
        (margins[n / 2 - 1] + margins[n / 2]) / 2.0
    };

    let mut histogram = vec![0u64; HISTOGRAM_BINS + 1];
    for &m in &margins {
        histogram[histogram_bin(m)] += 1;
    }

    Ok(EpochStats {
        epoch,
        margin_used,
        mean_loss,
        easy_proportion: easy as f64 / n as f64,
        median_effective_margin: median,
        histogram,
        triplet_count: n,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub history: Vec<EpochStats>,
    /// `(epoch, report)` for every evaluation point.
    pub evaluations: Vec<(usize, MetricReport)>,
    /// Scheduler state after the last epoch end.
    pub scheduler: SchedulerState,
}

impl TrainOutcome {
    pub fn final_margin(&self) -> f64 {
        self.scheduler.margin()
    }

    pub fn final_report(&self) -> Option<&MetricReport> {
        self.evaluations.last().map(|(_, r)| r)
    }
}

struct Evaluator<'a> {
    ds: &'a LabeledDataset,
    pairs: Vec<EvalPair>,
    ks: &'a [usize],
}

fn prepare_evaluator<'a>(
    config: &'a TrainConfig,
    eval_ds: Option<&'a LabeledDataset>,
) -> Result<Option<Evaluator<'a>>> {
    let Some(ds) = eval_ds else { return Ok(None) };
    if ds.dim() != config.model_dims[0] {
        return Err(Error::Config(format!(
            "evaluation features have dimension {}, model expects {}",
            ds.dim(),
            config.model_dims[0]
        )));
    }
    if let Some(&k) = config.eval.ks.iter().find(|&&k| k >= ds.len()) {
        return Err(Error::Config(format!(
            "Recall@{k} needs more than {k} evaluation samples, got {}",
            ds.len()
        )));
    }
    let pairs = generate_eval_pairs(ds, config.eval.seed)?;
    Ok(Some(Evaluator {
        ds,
        pairs,
        ks: &config.eval.ks,
    }))
}

fn gather_rows(features: &Array2<f64>, batch: &[Triplet]) -> Array2<f64> {
    let mut indices = Vec::with_capacity(batch.len() * 3);
    indices.extend(batch.iter().map(|t| t.anchor));
    indices.extend(batch.iter().map(|t| t.positive));
    indices.extend(batch.iter().map(|t| t.negative));
    features.select(Axis(0), &indices)
}

fn row(m: &Array2<f64>, i: usize) -> &[f64] {
    m.row(i).to_slice().expect("standard layout")
}

/// Loss observations and mean-loss parameter gradients for one mini-batch.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub observations: Vec<Observation>,
    pub mean_loss: f64,
    pub grads: ModelGrads,
}

/// Embeds the three roles of every triplet in one pass, evaluates the
/// (optionally mined) loss at `margin` and backpropagates the batch mean.
pub fn batch_gradient(
    model: &EmbeddingModel,
    features: &Array2<f64>,
    batch: &[Triplet],
    margin: f64,
    mining: bool,
) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let b = batch.len();
    let inputs = gather_rows(features, batch);
    let cache = model.forward_cached(inputs.view())?;
    let emb = &cache.embeddings.rows;

    let mut upstream = Array2::zeros(emb.raw_dim());
    let scale = 1.0 / b as f64;
    let mut observations = Vec::with_capacity(b);
    for j in 0..b {
        let g = triplet_loss_grad(row(emb, j), row(emb, b + j), row(emb, 2 * b + j), margin, mining)?;
        observations.push(Observation {
            effective_margin: g.distances.effective_margin,
            loss: g.loss,
        });
        if g.loss == 0.0 {
            continue;
        }
        for (target, grad) in [(j, &g.anchor), (b + j, &g.positive), (2 * b + j, &g.negative)] {
            let mut r = upstream.row_mut(target);
            for (u, &v) in r.iter_mut().zip(grad.iter()) {
                *u += v * scale;
            }
        }
    }
    let grads = model.backward_cached(&cache, upstream.view())?;
    let mean_loss = observations.iter().map(|o| o.loss).sum::<f64>() * scale;
    Ok(BatchGradient {
        observations,
        mean_loss,
        grads,
    })
}

/// Trains from scratch; fully deterministic in `config.seed`.
pub fn train(
    config: &TrainConfig,
    train_ds: &LabeledDataset,
    eval_ds: Option<&LabeledDataset>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let model = init_model(&config.model_dims, derive_seed(config.seed, &[STREAM_INIT]))?;
    train_from(config, model, train_ds, eval_ds)
}

/// Trains starting from the given model with a fresh optimizer and scheduler.
pub fn train_from(
    config: &TrainConfig,
    mut model: EmbeddingModel,
    train_ds: &LabeledDataset,
    eval_ds: Option<&LabeledDataset>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if model.layer_dims() != config.model_dims.as_slice() {
        return Err(Error::Config(format!(
            "model dims {:?} differ from configured {:?}",
            model.layer_dims(),
            config.model_dims
        )));
    }
    if train_ds.dim() != config.model_dims[0] {
        return Err(Error::Config(format!(
            "training features have dimension {}, model expects {}",
            train_ds.dim(),
            config.model_dims[0]
        )));
    }
    train_ds.ensure_no_singletons()?;
    let evaluator = prepare_evaluator(config, eval_ds)?;

    let mut optimizer = AdamState::new(&model, AdamConfig::with_learning_rate(config.learning_rate))?;
    let mut scheduler = MarginScheduler::new(config.scheduler)?;
    let triplet_seed = derive_seed(config.seed, &[STREAM_TRIPLETS]);
    let mut history = Vec::with_capacity(config.epochs);
    let mut evaluations = Vec::new();

    for epoch in 1..=config.epochs {
        let margin = scheduler.margin();
        let triplets = sample_triplets(train_ds, triplet_seed, epoch as u64)?;
        let mut observations = Vec::with_capacity(triplets.len());

        for (batch_no, batch) in triplets.chunks(config.batch_triplets).enumerate() {
            let diverged = |reason: String| Error::Divergence {
                epoch,
                batch: batch_no + 1,
                reason,
            };
            let step = batch_gradient(&model, train_ds.features(), batch, margin, config.mining)?;
            if let Some(bad) = step.observations.iter().find(|o| !o.loss.is_finite()) {
                return Err(diverged(format!("non-finite loss {}", bad.loss)));
            }
            observations.extend_from_slice(&step.observations);
            let (next_model, next_opt) = adam_step(&model, &optimizer, &step.grads).map_err(|e| match e {
                Error::NumericInput(msg) => diverged(msg),
                other => other,
            })?;
            model = next_model;
            optimizer = next_opt;
        }

        let stats = epoch_stats_from_observations(epoch, margin, &observations)?;
        scheduler.epoch_end(stats.easy_proportion)?;
        history.push(stats);

        if let Some(ev) = &evaluator {
            let periodic = config.eval_every > 0 && epoch % config.eval_every == 0;
            if periodic || epoch == config.epochs {
                let report = evaluate(&model, ev.ds, &ev.pairs, ev.ks)?;
                evaluations.push((epoch, report));
            }
        }
    }

    Ok(TrainOutcome {
        model,
        history,
        evaluations,
        scheduler: *scheduler.state(),
    })
}

/// Convenience for constant-margin runs with otherwise default settings.
pub fn constant_config(model_dims: Vec<usize>, mu: f64) -> TrainConfig {
    TrainConfig::new(model_dims, SchedulerConfig::constant(mu))
}

/// Default configuration for the given scheduler kind.
pub fn default_config(model_dims: Vec<usize>, kind: SchedulerKind) -> TrainConfig {
    TrainConfig::new(model_dims, SchedulerConfig::defaults(kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_by_class, SyntheticSpec};

    fn obs(margins: &[f64], margin: f64) -> Vec<Observation> {
        margins
            .iter()
            .map(|&m| Observation {
                effective_margin: m,
                loss: (margin - m).max(0.0),
            })
            .collect()
    }

    #[test]
    fn stats_odd_count() {
        let s = epoch_stats_from_observations(1, 0.3, &obs(&[0.1, 0.5, 0.9], 0.3)).unwrap();
        assert_eq!(s.easy_proportion, 2.0 / 3.0);
        assert_eq!(s.median_effective_margin, 0.5);
        assert_eq!(s.triplet_count, 3);
        assert_eq!(s.histogram.iter().sum::<u64>(), 3);
        assert!((s.mean_loss - 0.2 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stats_even_count_and_singleton() {
        let s = epoch_stats_from_observations(1, 0.0, &obs(&[-0.2, 0.0, 0.2, 0.4], 0.0)).unwrap();
        assert!((s.median_effective_margin - 0.1).abs() < 1e-15);

        let one = epoch_stats_from_observations(2, 0.3, &obs(&[0.75], 0.3)).unwrap();
        assert_eq!(one.median_effective_margin, 0.75);
        assert_eq!(one.histogram.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(one.histogram[27], 1);

        assert!(matches!(epoch_stats_from_observations(1, 0.3, &[]), Err(Error::Input(_))));
    }

    #[test]
    fn histogram_edges_and_overflow() {
        let s = epoch_stats_from_observations(1, 0.3, &obs(&[-2.0, -1.95, 1.99, 2.0, 0.0], 0.3)).unwrap();
        assert_eq!(s.histogram.len(), HISTOGRAM_BINS + 1);
        assert_eq!(s.histogram[0], 2);
        assert_eq!(s.histogram[20], 1);
        assert_eq!(s.histogram[39], 1);
        assert_eq!(s.histogram[40], 1);
        assert_eq!(histogram_bin_edges(0), (-2.0, -1.9));
        assert_eq!(histogram_bin_edges(23), (0.3, 0.4));
        assert_eq!(histogram_bin_edges(40), (2.0, 2.0));
    }

    fn small_data() -> (LabeledDataset, LabeledDataset) {
        let ds = generate_synthetic(
            &SyntheticSpec {
                num_classes: 6,
                samples_per_class: 6,
                feature_dim: 5,
                center_scale: 1.0,
                spread: 0.1,
            },
            3,
        )
        .unwrap();
        split_by_class(&ds, 0.5, 1).unwrap()
    }

    fn small_config(kind: SchedulerKind) -> TrainConfig {
        let mut c = default_config(vec![5, 8, 4], kind);
        c.epochs = 6;
        c.batch_triplets = 7;
        c.seed = 11;
        c.eval.ks = vec![1, 2];
        c.eval_every = 2;
        c
    }

    #[test]
    fn training_accounting_and_scheduler_consistency() {
        let (train_ds, test_ds) = small_data();
        for kind in [SchedulerKind::Constant, SchedulerKind::Linear, SchedulerKind::Dams] {
            let cfg = small_config(kind);
            let out = train(&cfg, &train_ds, Some(&test_ds)).unwrap();
            assert_eq!(out.history.len(), cfg.epochs);
            let mut replay = SchedulerState::new(cfg.scheduler).unwrap();
            for s in &out.history {
                assert_eq!(s.margin_used, replay.margin());
                assert_eq!(s.triplet_count, train_ds.len());
                assert_eq!(s.histogram.iter().sum::<u64>() as usize, s.triplet_count);
                assert!(s.mean_loss >= 0.0);
                replay = replay.epoch_end(s.easy_proportion).unwrap();
            }
            assert_eq!(replay, out.scheduler);
            let epochs: Vec<usize> = out.evaluations.iter().map(|(e, _)| *e).collect();
            assert_eq!(epochs, vec![2, 4, 6]);
            let emb = out.model.forward(test_ds.features().view()).unwrap();
            for r in emb.rows.rows() {
                assert!((r.dot(&r).sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (train_ds, test_ds) = small_data();
        let cfg = small_config(SchedulerKind::Dams);
        let a = train(&cfg, &train_ds, Some(&test_ds)).unwrap();
        let b = train(&cfg, &train_ds, Some(&test_ds)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        assert_eq!(a.evaluations, b.evaluations);
        let mut other = cfg.clone();
        other.seed = 12;
        assert_ne!(train(&other, &train_ds, None).unwrap().model, a.model);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let (train_ds, _) = small_data();
        let mut cfg = small_config(SchedulerKind::Constant);
        cfg.model_dims = vec![4, 4];
        assert!(matches!(train(&cfg, &train_ds, None), Err(Error::Config(_))));
    }

    #[test]
    fn recall_k_too_large_for_eval_set() {
        let (train_ds, test_ds) = small_data();
        let mut cfg = small_config(SchedulerKind::Constant);
        cfg.eval.ks = vec![test_ds.len()];
        assert!(matches!(train(&cfg, &train_ds, Some(&test_ds)), Err(Error::Config(_))));
    }

    #[test]
    fn exploding_parameters_surface_as_divergence() {
        let (train_ds, _) = small_data();
        let mut cfg = small_config(SchedulerKind::Constant);
        cfg.learning_rate = 1e300;
        match train(&cfg, &train_ds, None) {
            Err(Error::Divergence { epoch, batch, .. }) => assert!(epoch >= 1 && batch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_margin_on_solved_data_is_a_fixpoint() {
        // Two classes on opposite sides of the first axis; an identity head
        // already puts every negative farther than every positive.
        use crate::numerics::Layer;
        use ndarray::{array, Array1};
        let features = array![
            [1.0, 0.05],
            [1.0, -0.05],
            [1.0, 0.0],
            [-1.0, 0.05],
            [-1.0, -0.05],
            [-1.0, 0.0]
        ];
        let labels = ["a", "a", "a", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
        let ds = LabeledDataset::new(features, labels).unwrap();
        let model = EmbeddingModel::from_layers(
            &[2, 2],
            vec![Layer {
                weight: array![[1.0, 0.0], [0.0, 1.0]],
                bias: Array1::zeros(2),
            }],
        )
        .unwrap();
        let mut cfg = constant_config(vec![2, 2], 0.0);
        cfg.epochs = 5;
        cfg.batch_triplets = 4;
        let out = train_from(&cfg, model.clone(), &ds, None).unwrap();
        assert_eq!(out.model, model);
        assert!(out.history.iter().all(|s| s.mean_loss == 0.0 && s.easy_proportion == 1.0));
    }
}
