use serde::{Deserialize, Serialize};

use super::model::{EmbeddingModel, Layer, ModelGrads};
use crate::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Config(format!(
                "betas must lie in (0, 1), got {} / {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Moment accumulators for every parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    pub first_moment: Vec<Layer>,
    pub second_moment: Vec<Layer>,
}

impl AdamState {
    pub fn new(model: &EmbeddingModel, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        let zeros = ModelGrads::zeros_like(model).layers;
        Ok(AdamState {
            config,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        })
    }
}

/// One bias-corrected Adam update. Returns the new model and state; the
/// inputs are left untouched, so a refused step leaves everything as it was.
pub fn adam_step(
    model: &EmbeddingModel,
    state: &AdamState,
    grads: &ModelGrads,
) -> Result<(EmbeddingModel, AdamState)> {
    state.config.validate()?;
    if !grads.matches(model) {
        return Err(Error::Shape("gradient shapes do not match the model".into()));
    }
    if state.first_moment.len() != grads.layers.len() {
        return Err(Error::Shape("optimizer state does not match the model".into()));
    }
    if !grads.is_finite() {
        return Err(Error::NumericInput("non-finite gradient; Adam step refused".into()));
    }

    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let step = state.step_count + 1;
    let t = i32::try_from(step).unwrap_or(i32::MAX);
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);

    let mut next_model = model.clone();
    let mut next_state = state.clone();
    next_state.step_count = step;

    let update = |param: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *param -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    };

    for (((layer, m), v), g) in next_model
        .layers_mut()
        .iter_mut()
        .zip(next_state.first_moment.iter_mut())
        .zip(next_state.second_moment.iter_mut())
        .zip(&grads.layers)
    {
        for (((p, mi), vi), &gi) in layer
            .weight
            .iter_mut()
            .zip(m.weight.iter_mut())
            .zip(v.weight.iter_mut())
            .zip(g.weight.iter())
        {
            update(p, mi, vi, gi);
        }
        for (((p, mi), vi), &gi) in layer
            .bias
            .iter_mut()
            .zip(m.bias.iter_mut())
            .zip(v.bias.iter_mut())
            .zip(g.bias.iter())
        {
            update(p, mi, vi, gi);
        }
    }

    if !next_model.to_flat().iter().all(|v| v.is_finite()) {
        return Err(Error::NumericInput("Adam update produced non-finite parameters".into()));
    }
    Ok((next_model, next_state))
}
