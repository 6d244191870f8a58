//! Elastic weight consolidation with a diagonal empirical Fisher.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{compute_gradients, EncoderModel, Objective, Tensor2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwcState {
    anchor: Vec<f64>,
    fisher: Vec<f64>,
    lambda: f64,
}

impl EwcState {
    pub fn new(anchor: Vec<f64>, fisher: Vec<f64>, lambda: f64) -> Result<Self> {
        if anchor.len() != fisher.len() {
            return Err(Error::Shape(format!(
                "anchor has {} entries, Fisher {}",
                anchor.len(),
                fisher.len()
            )));
        }
        if fisher.iter().any(|f| !(*f >= 0.0)) {
            return Err(Error::Config("Fisher entries must be non-negative".into()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("EWC lambda must be >= 0, got {lambda}")));
        }
        Ok(Self {
            anchor,
            fisher,
            lambda,
        })
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn fisher(&self) -> &[f64] {
        &self.fisher
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `λ/2 · Σ F_i (θ_i − θ*_i)²`.
    pub fn penalty(&self, params: &[f64]) -> f64 {
        0.5 * self.lambda
            * params
                .iter()
                .zip(&self.anchor)
                .zip(&self.fisher)
                .map(|((p, a), f)| f * (p - a) * (p - a))
                .sum::<f64>()
    }

    /// `λ · F ⊙ (θ − θ*)`.
    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        params
            .iter()
            .zip(&self.anchor)
            .zip(&self.fisher)
            .map(|((p, a), f)| self.lambda * f * (p - a))
            .collect()
    }

    /// Exact minimizer of `penalty(θ) + ‖θ − θ₀‖²/(2·lr)`, applied to every
    /// parameter. Stable for arbitrarily large `λ`.
    pub fn proximal_step(&self, model: &mut EncoderModel, lr: f64) {
        model.update_params(|i, p| {
            let k = lr * self.lambda * self.fisher[i];
            if k > 0.0 {
                *p = (*p + k * self.anchor[i]) / (1.0 + k);
            }
        });
    }

    /// Folds in a newer task: Fisher terms add up, the anchor moves to the
    /// latest parameters.
    pub fn consolidate(&mut self, params: Vec<f64>, fisher: &[f64]) -> Result<()> {
        if params.len() != self.anchor.len() || fisher.len() != self.fisher.len() {
            return Err(Error::Shape("EWC consolidation with mismatched shapes".into()));
        }
        self.anchor = params;
        self.fisher
            .iter_mut()
            .zip(fisher)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }
}

/// Diagonal empirical Fisher of the encoder parameters: the mean over
/// examples of the squared per-example loss gradient.
pub fn estimate_fisher(
    model: &EncoderModel,
    head: &Tensor2D,
    inputs: &Tensor2D,
    labels: &[usize],
    objective: Objective,
) -> Result<Vec<f64>> {
    if inputs.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} inputs for {} labels",
            inputs.rows(),
            labels.len()
        )));
    }
    let mut fisher = vec![0.0; model.num_params()];
    if labels.is_empty() {
        return Ok(fisher);
    }
    for (i, &label) in labels.iter().enumerate() {
        let one = inputs.select_rows(&[i]);
        let grads = compute_gradients(model, head, &one, &[label], objective)?;
        fisher
            .iter_mut()
            .zip(&grads.encoder)
            .for_each(|(f, g)| *f += g * g);
    }
    let n = labels.len() as f64;
    fisher.iter_mut().for_each(|f| *f /= n);
    Ok(fisher)
}
