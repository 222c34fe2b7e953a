//! Run and sweep configuration files (TOML).
//!
//! File structs mirror the document: optional fields take the documented
//! defaults at resolution time and unknown keys are rejected. A resolved
//! configuration can be written back with every value explicit and every
//! path absolute, which reproduces the run exactly when fed back in.

use std::fs;
use std::path::{Path, PathBuf};

use dams_core::scheduler::{SchedulerConfig, SchedulerKind};
use dams_core::trainer::{EvalConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Single dataset: singleton removal then class-disjoint split.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    /// Pre-split datasets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_triplets: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mining: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model_dims: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSection {
    pub kind: SchedulerKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dams_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin_cap: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub train: TrainSection,
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub mu0: Vec<f64>,
    pub threshold: Vec<f64>,
    pub step: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfigFile {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub repetitions: Option<usize>,
    #[serde(default)]
    pub base_seed: Option<u64>,
    pub grid: GridSection,
    pub data: DataSection,
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

/// Where the training and evaluation samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Single {
        path: PathBuf,
        train_fraction: f64,
        split_seed: u64,
    },
    Separate {
        train_path: PathBuf,
        test_path: Option<PathBuf>,
    },
}

impl DataSource {
    fn to_section(&self) -> DataSection {
        match self {
            DataSource::Single {
                path,
                train_fraction,
                split_seed,
            } => DataSection {
                path: Some(path.clone()),
                train_fraction: Some(*train_fraction),
                split_seed: Some(*split_seed),
                ..DataSection::default()
            },
            DataSource::Separate {
                train_path,
                test_path,
            } => DataSection {
                train_path: Some(train_path.clone()),
                test_path: test_path.clone(),
                ..DataSection::default()
            },
        }
    }
}

/// Fully resolved training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub data: DataSource,
    pub train: TrainConfig,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::ConfigFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn base_dir(config_path: &Path) -> Result<PathBuf> {
    let parent = config_path.parent().unwrap_or_else(|| Path::new(""));
    let parent = if parent.as_os_str().is_empty() {
        Path::new(".")
    } else {
        parent
    };
    std::path::absolute(parent).map_err(|e| CliError::io(parent, e))
}

fn anchor(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn config_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::ConfigFile {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn resolve_data(section: &DataSection, base: &Path, cfg_path: &Path) -> Result<DataSource> {
    match (&section.path, &section.train_path) {
        (Some(path), None) => {
            if section.test_path.is_some() {
                return Err(config_error(cfg_path, "data.test_path requires data.train_path, not data.path"));
            }
            Ok(DataSource::Single {
                path: anchor(base, path),
                train_fraction: section.train_fraction.unwrap_or(DEFAULT_TRAIN_FRACTION),
                split_seed: section.split_seed.unwrap_or(0),
            })
        }
        (None, Some(train_path)) => {
            if section.train_fraction.is_some() || section.split_seed.is_some() {
                return Err(config_error(
                    cfg_path,
                    "data.train_fraction / data.split_seed only apply to data.path",
                ));
            }
            Ok(DataSource::Separate {
                train_path: anchor(base, train_path),
                test_path: section.test_path.as_ref().map(|p| anchor(base, p)),
            })
        }
        (Some(_), Some(_)) => Err(config_error(cfg_path, "set either data.path or data.train_path, not both")),
        (None, None) => Err(config_error(cfg_path, "data.path or data.train_path is required")),
    }
}

fn resolve_eval(section: &EvalSection) -> EvalConfig {
    let defaults = EvalConfig::default();
    EvalConfig {
        seed: section.seed.unwrap_or(defaults.seed),
        ks: section.ks.clone().unwrap_or(defaults.ks),
    }
}

fn resolve_scheduler(section: &SchedulerSection) -> SchedulerConfig {
    let d = SchedulerConfig::defaults(section.kind);
    SchedulerConfig {
        kind: section.kind,
        mu0: section.mu0.unwrap_or(d.mu0),
        linear_step: section.linear_step.unwrap_or(d.linear_step),
        dams_step: section.dams_step.unwrap_or(d.dams_step),
        threshold: section.threshold.unwrap_or(d.threshold),
        margin_cap: section.margin_cap.unwrap_or(d.margin_cap),
    }
}

fn resolve_train(section: &TrainSection, scheduler: SchedulerConfig, eval: EvalConfig) -> TrainConfig {
    let mut cfg = TrainConfig::new(section.model_dims.clone(), scheduler);
    cfg.epochs = section.epochs.unwrap_or(cfg.epochs);
    cfg.batch_triplets = section.batch_triplets.unwrap_or(cfg.batch_triplets);
    cfg.learning_rate = section.learning_rate.unwrap_or(cfg.learning_rate);
    cfg.mining = section.mining.unwrap_or(cfg.mining);
    cfg.seed = section.seed.unwrap_or(cfg.seed);
    cfg.eval_every = section.eval_every.unwrap_or(cfg.eval_every);
    cfg.eval = eval;
    cfg
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: RunConfigFile = read_toml(path)?;
        Self::resolve(&file, path)
    }

    pub fn resolve(file: &RunConfigFile, cfg_path: &Path) -> Result<Self> {
        let base = base_dir(cfg_path)?;
        let train = resolve_train(&file.train, resolve_scheduler(&file.scheduler), resolve_eval(&file.eval));
        train.validate().map_err(|e| config_error(cfg_path, e.to_string()))?;
        Ok(RunConfig {
            output_dir: anchor(&base, &file.output_dir),
            data: resolve_data(&file.data, &base, cfg_path)?,
            train,
        })
    }

    /// Every field explicit, every path absolute.
    pub fn to_file(&self) -> RunConfigFile {
        let t = &self.train;
        let s = t.scheduler;
        RunConfigFile {
            output_dir: self.output_dir.clone(),
            data: self.data.to_section(),
            train: TrainSection {
                epochs: Some(t.epochs),
                batch_triplets: Some(t.batch_triplets),
                learning_rate: Some(t.learning_rate),
                mining: Some(t.mining),
                seed: Some(t.seed),
                model_dims: t.model_dims.clone(),
                eval_every: Some(t.eval_every),
            },
            scheduler: SchedulerSection {
                kind: s.kind,
                mu0: Some(s.mu0),
                linear_step: Some(s.linear_step),
                dams_step: Some(s.dams_step),
                threshold: Some(s.threshold),
                margin_cap: Some(s.margin_cap),
            },
            eval: EvalSection {
                seed: Some(t.eval.seed),
                ks: Some(t.eval.ks.clone()),
            },
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_file()).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }
}

/// Fully resolved DAMS sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub output_dir: PathBuf,
    pub repetitions: usize,
    pub base_seed: u64,
    pub mu0: Vec<f64>,
    pub threshold: Vec<f64>,
    pub step: Vec<f64>,
    pub margin_cap: f64,
    pub data: DataSource,
    /// Template; scheduler and seed are set per run.
    pub train: TrainConfig,
}

impl SweepConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: SweepConfigFile = read_toml(path)?;
        Self::resolve(&file, path)
    }

    pub fn resolve(file: &SweepConfigFile, cfg_path: &Path) -> Result<Self> {
        let base = base_dir(cfg_path)?;
        let grid = &file.grid;
        for (name, values) in [("mu0", &grid.mu0), ("threshold", &grid.threshold), ("step", &grid.step)] {
            if values.is_empty() {
                return Err(config_error(cfg_path, format!("grid.{name} must list at least one value")));
            }
        }
        if file.train.seed.is_some() {
            return Err(config_error(
                cfg_path,
                "train.seed is derived per sweep run; set base_seed instead",
            ));
        }
        let repetitions = file.repetitions.unwrap_or(1);
        if repetitions == 0 {
            return Err(config_error(cfg_path, "repetitions must be positive"));
        }
        let margin_cap = grid.margin_cap.unwrap_or(dams_core::scheduler::DEFAULT_MARGIN_CAP);
        let train = resolve_train(
            &file.train,
            SchedulerConfig::defaults(SchedulerKind::Dams),
            resolve_eval(&file.eval),
        );
        train.validate().map_err(|e| config_error(cfg_path, e.to_string()))?;
        let sweep = SweepConfig {
            output_dir: anchor(&base, &file.output_dir),
            repetitions,
            base_seed: file.base_seed.unwrap_or(0),
            mu0: grid.mu0.clone(),
            threshold: grid.threshold.clone(),
            step: grid.step.clone(),
            margin_cap,
            data: resolve_data(&file.data, &base, cfg_path)?,
            train,
        };
        for point in sweep.grid() {
            sweep
                .scheduler_for(&point)
                .validate()
                .map_err(|e| config_error(cfg_path, e.to_string()))?;
        }
        Ok(sweep)
    }

    /// Cartesian product in `mu0`, `threshold`, `step` order (step varies fastest).
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &mu0 in &self.mu0 {
            for &threshold in &self.threshold {
                for &step in &self.step {
                    points.push(GridPoint {
                        index: points.len(),
                        mu0,
                        threshold,
                        step,
                    });
                }
            }
        }
        points
    }

    pub fn scheduler_for(&self, point: &GridPoint) -> SchedulerConfig {
        SchedulerConfig {
            margin_cap: self.margin_cap,
            ..SchedulerConfig::dams(point.mu0, point.threshold, point.step)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub mu0: f64,
    pub threshold: f64,
    pub step: f64,
}
