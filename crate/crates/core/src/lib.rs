//! Deep-metric-learning engine built around the triplet margin ranking loss.
//!
//! The crate trains a small multilayer perceptron whose outputs live on the
//! unit hypersphere, using triplets sampled from a labeled feature dataset.
//! The margin of the loss is driven by a [`scheduler::MarginScheduler`] that
//! can be held constant, grown linearly, or grown adaptively whenever the
//! proportion of easy triplets in an epoch reaches a threshold.
//!
//! Modules, bottom-up:
//!
//! - [`numerics`]: MLP embedding head, backpropagation and Adam.
//! - [`loss`]: distances, in-triplet mining, loss and its subgradient.
//! - [`scheduler`]: margin policies as an epoch-level state machine.
//! - [`data`]: labeled datasets, synthetic generation, CSV, splits, sampling.
//! - [`eval`]: pair-protocol AUC-ROC and leave-one-out Recall@k.
//! - [`trainer`]: the training loop and per-epoch statistics.

pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod numerics;
pub mod scheduler;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
