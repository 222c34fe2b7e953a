//! A single training run and the files it leaves in its directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dams_core::data::{load_csv, remove_singletons, split_by_class, LabeledDataset};
use dams_core::numerics::save_model;
use dams_core::trainer::{histogram_bin_edges, train, EpochStats, TrainConfig, TrainOutcome};

use crate::config::{DataSource, RunConfig};
use crate::error::{CliError, Result};

pub const EPOCHS_FILE: &str = "epochs.csv";
pub const HISTOGRAMS_FILE: &str = "histograms.csv";
pub const MODEL_FILE: &str = "model.txt";
pub const METRICS_FILE: &str = "metrics.txt";
pub const METRICS_TRACE_FILE: &str = "metrics_trace.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: LabeledDataset,
    pub test: Option<LabeledDataset>,
}

pub fn prepare_data(source: &DataSource) -> Result<PreparedData> {
    match source {
        DataSource::Single {
            path,
            train_fraction,
            split_seed,
        } => {
            let ds = remove_singletons(&load_csv(path)?)?;
            let (train, test) = split_by_class(&ds, *train_fraction, *split_seed)?;
            Ok(PreparedData {
                train,
                test: Some(test),
            })
        }
        DataSource::Separate {
            train_path,
            test_path,
        } => {
            let train = remove_singletons(&load_csv(train_path)?)?;
            let test = match test_path {
                Some(p) => Some(remove_singletons(&load_csv(p)?)?),
                None => None,
            };
            Ok(PreparedData { train, test })
        }
    }
}

pub fn epochs_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,margin,mean_loss,easy_proportion,median_effective_margin,triplet_count\n");
    for s in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.epoch, s.margin_used, s.mean_loss, s.easy_proportion, s.median_effective_margin, s.triplet_count
        );
    }
    out
}

pub fn histograms_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,bin_lo,bin_hi,count\n");
    for s in history {
        for (i, count) in s.histogram.iter().enumerate() {
            let (lo, hi) = histogram_bin_edges(i);
            let _ = writeln!(out, "{},{lo},{hi},{count}", s.epoch);
        }
    }
    out
}

fn metrics_trace_csv(outcome: &TrainOutcome) -> String {
    let ks: Vec<usize> = outcome
        .evaluations
        .first()
        .map(|(_, r)| r.recall_at.keys().copied().collect())
        .unwrap_or_default();
    let mut out = String::from("epoch,auc");
    for k in &ks {
        let _ = write!(out, ",recall@{k}");
    }
    out.push('\n');
    for (epoch, report) in &outcome.evaluations {
        let _ = write!(out, "{epoch},{:.6}", report.auc);
        for k in &ks {
            let _ = write!(out, ",{:.6}", report.recall_at[k]);
        }
        out.push('\n');
    }
    out
}

fn write_file(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| CliError::io(path, e))
}

/// Trains and writes every per-run artifact into `cfg.output_dir`.
pub fn execute_run(cfg: &RunConfig, data: &PreparedData) -> Result<TrainOutcome> {
    let outcome = train(&cfg.train, &data.train, data.test.as_ref())?;
    write_outputs(cfg, &outcome)?;
    Ok(outcome)
}

pub fn write_outputs(cfg: &RunConfig, outcome: &TrainOutcome) -> Result<()> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_file(dir.join(RESOLVED_CONFIG_FILE), &cfg.to_toml()?)?;
    write_file(dir.join(EPOCHS_FILE), &epochs_csv(&outcome.history))?;
    write_file(dir.join(HISTOGRAMS_FILE), &histograms_csv(&outcome.history))?;
    save_model(&outcome.model, dir.join(MODEL_FILE))?;
    if let Some(report) = outcome.final_report() {
        write_file(dir.join(METRICS_FILE), &report.to_kv_text())?;
        write_file(dir.join(METRICS_TRACE_FILE), &metrics_trace_csv(outcome))?;
    }
    Ok(())
}

/// `train <config>`: returns the resolved config alongside the outcome.
pub fn cmd_train(config_path: &Path) -> Result<(RunConfig, TrainOutcome)> {
    let cfg = RunConfig::load(config_path)?;
    let data = prepare_data(&cfg.data)?;
    check_dims(&cfg.train, &data)?;
    let outcome = execute_run(&cfg, &data)?;
    Ok((cfg, outcome))
}

pub(crate) fn check_dims(train: &TrainConfig, data: &PreparedData) -> Result<()> {
    let expected = train.model_dims.first().copied().unwrap_or(0);
    if data.train.dim() != expected {
        return Err(CliError::Config(format!(
            "train.model_dims starts with {expected} but the training data has {} features",
            data.train.dim()
        )));
    }
    Ok(())
}
