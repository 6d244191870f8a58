use serde::{Deserialize, Serialize};

use super::encoder::EncoderModel;
use crate::error::{Error, Result};

/// Learning-rate settings shared by every SGD instance of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// `(epoch, multiplier)` pairs; the multiplier applies from that epoch on.
    #[serde(default)]
    pub schedule: Vec<(usize, f64)>,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }

    pub fn rate_at(&self, epoch: usize) -> f64 {
        self.schedule
            .iter()
            .filter(|(e, _)| *e <= epoch)
            .fold(self.learning_rate, |lr, (_, m)| lr * m)
    }
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            schedule: vec![(15, 0.1), (25, 0.1)],
        }
    }
}

/// Heavy-ball SGD with separate velocity buffers for the encoder and the
/// trainable head block: `v ← μv + g`, `θ ← θ − lr·v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub config: SgdConfig,
    encoder_velocity: Vec<f64>,
    head_velocity: Vec<f64>,
}

impl SgdState {
    pub fn new(config: SgdConfig, encoder_params: usize, head_params: usize) -> Self {
        Self {
            config,
            encoder_velocity: vec![0.0; encoder_params],
            head_velocity: vec![0.0; head_params],
        }
    }

    pub fn step_encoder(&mut self, model: &mut EncoderModel, grad: &[f64], epoch: usize) -> Result<()> {
        if grad.len() != self.encoder_velocity.len() || grad.len() != model.num_params() {
            return Err(Error::Shape(format!(
                "encoder gradient has {} entries, velocity {}, model {}",
                grad.len(),
                self.encoder_velocity.len(),
                model.num_params()
            )));
        }
        let lr = self.config.rate_at(epoch);
        let mu = self.config.momentum;
        let vel = &mut self.encoder_velocity;
        model.update_params(|i, p| {
            vel[i] = mu * vel[i] + grad[i];
            *p -= lr * vel[i];
        });
        Ok(())
    }

    pub fn step_head(&mut self, head: &mut [f64], grad: &[f64], epoch: usize) -> Result<()> {
        if grad.len() != self.head_velocity.len() || head.len() != grad.len() {
            return Err(Error::Shape(format!(
                "head gradient has {} entries, velocity {}, head {}",
                grad.len(),
                self.head_velocity.len(),
                head.len()
            )));
        }
        let lr = self.config.rate_at(epoch);
        let mu = self.config.momentum;
        for ((p, v), g) in head.iter_mut().zip(&mut self.head_velocity).zip(grad) {
            *v = mu * *v + g;
            *p -= lr * *v;
        }
        Ok(())
    }
}
