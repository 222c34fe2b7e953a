//! Margin policies advanced once per epoch.
//!
//! The margin is always recomputed from integer counters,
//! `min(cap, mu0 + step * count)`, never accumulated, so a trajectory can be
//! checked bit-exactly against its closed form. The margin returned after an
//! epoch ends is the one used during the following epoch.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Constant,
    Linear,
    Dams,
}

impl std::fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SchedulerKind::Constant => "constant",
            SchedulerKind::Linear => "linear",
            SchedulerKind::Dams => "dams",
        })
    }
}

/// Default margin cap: the diameter of the unit hypersphere.
pub const DEFAULT_MARGIN_CAP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    /// Initial margin; the fixed margin for [`SchedulerKind::Constant`].
    pub mu0: f64,
    pub linear_step: f64,
    pub dams_step: f64,
    /// Easy-proportion threshold that triggers a DAMS increment.
    pub threshold: f64,
    pub margin_cap: f64,
}

impl SchedulerConfig {
    pub fn constant(mu: f64) -> Self {
        SchedulerConfig {
            kind: SchedulerKind::Constant,
            mu0: mu,
            ..Self::defaults(SchedulerKind::Constant)
        }
    }

    pub fn linear(mu0: f64, step: f64) -> Self {
        SchedulerConfig {
            mu0,
            linear_step: step,
            ..Self::defaults(SchedulerKind::Linear)
        }
    }

    pub fn dams(mu0: f64, threshold: f64, step: f64) -> Self {
        SchedulerConfig {
            mu0,
            threshold,
            dams_step: step,
            ..Self::defaults(SchedulerKind::Dams)
        }
    }

    /// Experiment defaults: constant μ = 0.3; linear and DAMS start at 0
    /// with step 0.01; threshold 0.95; cap 2.0.
    pub fn defaults(kind: SchedulerKind) -> Self {
        SchedulerConfig {
            kind,
            mu0: if kind == SchedulerKind::Constant { 0.3 } else { 0.0 },
            linear_step: 0.01,
            dams_step: 0.01,
            threshold: 0.95,
            margin_cap: DEFAULT_MARGIN_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_non_negative = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_non_negative(self.mu0) {
            return Err(Error::Config(format!("mu0 must be >= 0, got {}", self.mu0)));
        }
        if !finite_non_negative(self.linear_step) || !finite_non_negative(self.dams_step) {
            return Err(Error::Config(format!(
                "scheduler steps must be >= 0, got linear {} / dams {}",
                self.linear_step, self.dams_step
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if !(self.margin_cap.is_finite() && self.margin_cap >= self.mu0) {
            return Err(Error::Config(format!(
                "margin_cap {} must be finite and >= mu0 {}",
                self.margin_cap, self.mu0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerState {
    pub config: SchedulerConfig,
    pub epochs_completed: u64,
    pub increments_applied: u64,
    pub current_margin: f64,
}

impl SchedulerState {
    pub fn new(config: SchedulerConfig) -> Result<Self> {
        config.validate()?;
        Ok(SchedulerState {
            config,
            epochs_completed: 0,
            increments_applied: 0,
            current_margin: config.mu0,
        })
    }

    pub fn margin(&self) -> f64 {
        self.current_margin
    }

    /// Closes an epoch with its observed easy proportion.
    pub fn epoch_end(&self, easy_proportion: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&easy_proportion) {
            return Err(Error::Input(format!(
                "easy proportion must lie in [0, 1], got {easy_proportion}"
            )));
        }
        let cfg = self.config;
        let mut next = *self;
        next.epochs_completed += 1;
        next.current_margin = match cfg.kind {
            SchedulerKind::Constant => cfg.mu0,
            SchedulerKind::Linear => closed_form(cfg.mu0, cfg.linear_step, next.epochs_completed, cfg.margin_cap),
            SchedulerKind::Dams => {
                if easy_proportion >= cfg.threshold {
                    next.increments_applied += 1;
                }
                closed_form(cfg.mu0, cfg.dams_step, next.increments_applied, cfg.margin_cap)
            }
        };
        Ok(next)
    }
}

/// `min(cap, mu0 + step * count)`.
pub fn closed_form(mu0: f64, step: f64, count: u64, cap: f64) -> f64 {
    (mu0 + step * count as f64).min(cap)
}

/// Owning wrapper that advances a [`SchedulerState`] in place.
#[derive(Debug, Clone)]
pub struct MarginScheduler {
    state: SchedulerState,
}

impl MarginScheduler {
    pub fn new(config: SchedulerConfig) -> Result<Self> {
        Ok(MarginScheduler {
            state: SchedulerState::new(config)?,
        })
    }

    pub fn margin(&self) -> f64 {
        self.state.margin()
    }

    pub fn state(&self) -> &SchedulerState {
        &self.state
    }

    pub fn epoch_end(&mut self, easy_proportion: f64) -> Result<f64> {
        self.state = self.state.epoch_end(easy_proportion)?;
        Ok(self.state.margin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(config: SchedulerConfig, trace: &[f64]) -> Vec<f64> {
        let mut s = SchedulerState::new(config).unwrap();
        let mut out = vec![s.margin()];
        for &p in trace {
            s = s.epoch_end(p).unwrap();
            out.push(s.margin());
        }
        out
    }

    #[test]
    fn init_margins() {
        let dams = SchedulerState::new(SchedulerConfig::defaults(SchedulerKind::Dams)).unwrap();
        assert_eq!(dams.margin(), 0.0);
        assert_eq!(dams.config.dams_step, 0.01);
        assert_eq!(dams.config.threshold, 0.95);
        assert_eq!(SchedulerState::new(SchedulerConfig::constant(0.3)).unwrap().margin(), 0.3);
        let lin = SchedulerState::new(SchedulerConfig::linear(0.0, 0.01)).unwrap();
        assert_eq!(lin.margin(), 0.0);
        assert_eq!((lin.epochs_completed, lin.increments_applied), (0, 0));
    }

    #[test]
    fn linear_reaches_one_after_hundred_epochs() {
        let margins = run(SchedulerConfig::linear(0.0, 0.01), &[0.5; 100]);
        assert_eq!(margins[100], 1.0);
    }

    #[test]
    fn dams_below_threshold_is_unchanged() {
        let margins = run(SchedulerConfig::defaults(SchedulerKind::Dams), &[0.80]);
        assert_eq!(margins, vec![0.0, 0.0]);
    }

    #[test]
    fn dams_counts_threshold_crossings() {
        let margins = run(SchedulerConfig::dams(0.0, 0.95, 0.01), &[0.96, 0.90, 0.97]);
        assert_eq!(margins, vec![0.0, 0.01, 0.01, 0.02]);
    }

    #[test]
    fn dams_threshold_is_inclusive() {
        let margins = run(SchedulerConfig::dams(0.0, 1.0, 0.05), &[1.0, 0.999]);
        assert_eq!(margins, vec![0.0, 0.05, 0.05]);
    }

    #[test]
    fn margin_is_capped() {
        let mut cfg = SchedulerConfig::linear(0.0, 0.5);
        cfg.margin_cap = 1.2;
        let margins = run(cfg, &[0.0; 5]);
        assert_eq!(margins, vec![0.0, 0.5, 1.0, 1.2, 1.2, 1.2]);
    }

    #[test]
    fn invalid_inputs() {
        let s = SchedulerState::new(SchedulerConfig::defaults(SchedulerKind::Dams)).unwrap();
        assert!(matches!(s.epoch_end(1.5), Err(Error::Input(_))));
        assert!(matches!(s.epoch_end(-0.1), Err(Error::Input(_))));
        assert!(matches!(s.epoch_end(f64::NAN), Err(Error::Input(_))));
        let mut bad = SchedulerConfig::defaults(SchedulerKind::Dams);
        bad.threshold = 1.1;
        assert!(SchedulerState::new(bad).is_err());
        assert!(SchedulerState::new(SchedulerConfig::constant(-0.1)).is_err());
        let mut capped = SchedulerConfig::constant(0.5);
        capped.margin_cap = 0.4;
        assert!(SchedulerState::new(capped).is_err());
    }

    #[test]
    fn wrapper_tracks_state() {
        let mut s = MarginScheduler::new(SchedulerConfig::dams(0.1, 0.5, 0.1)).unwrap();
        assert_eq!(s.epoch_end(0.6).unwrap(), closed_form(0.1, 0.1, 1, 2.0));
        assert_eq!(s.state().increments_applied, 1);
        assert_eq!(s.margin(), s.state().current_margin);
    }

    proptest! {
        #[test]
        fn trajectories_match_closed_forms(
            trace in proptest::collection::vec(0.0f64..=1.0, 0..150),
            mu0 in 0.0f64..1.0,
            step in 0.0f64..0.2,
            t in 0.0f64..=1.0,
        ) {
            let lin = run(SchedulerConfig::linear(mu0, step), &trace);
            let dams = run(SchedulerConfig::dams(mu0, t, step), &trace);
            let constant = run(SchedulerConfig::constant(mu0), &trace);
            let mut crossings = 0u64;
            for (i, &p) in trace.iter().enumerate() {
                if p >= t {
                    crossings += 1;
                }
                let n = (i + 1) as u64;
                prop_assert_eq!(lin[i + 1].to_bits(), closed_form(mu0, step, n, 2.0).to_bits());
                prop_assert_eq!(dams[i + 1].to_bits(), closed_form(mu0, step, crossings, 2.0).to_bits());
            }
            prop_assert!(constant.iter().all(|&m| m == mu0));
            for w in lin.windows(2).chain(dams.windows(2)) {
                prop_assert!(w[1] >= w[0]);
            }
            prop_assert!(lin.iter().chain(&dams).all(|&m| m <= 2.0));

            // t = 0 triggers every epoch, reproducing the linear schedule.
            let always = run(SchedulerConfig::dams(mu0, 0.0, step), &trace);
            prop_assert_eq!(always, lin);
        }
    }
}
