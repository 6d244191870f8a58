use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{dot, l2_norm, EncoderModel, Tensor2D};

/// Frozen copy of the encoder from the end of the previous task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillState {
    snapshot: EncoderModel,
    pub weight: f64,
}

impl DistillState {
    pub fn new(snapshot: EncoderModel, weight: f64) -> Self {
        Self { snapshot, weight }
    }

    pub fn snapshot(&self) -> &EncoderModel {
        &self.snapshot
    }
}

fn check(current: &Tensor2D, previous: &Tensor2D) -> Result<()> {
    if current.rows() != previous.rows() || current.cols() != previous.cols() {
        return Err(Error::Shape(format!(
            "current features {}x{} vs snapshot features {}x{}",
            current.rows(),
            current.cols(),
            previous.rows(),
            previous.cols()
        )));
    }
    Ok(())
}

fn norms(t: &Tensor2D) -> Result<Vec<f64>> {
    t.row_iter()
        .enumerate()
        .map(|(i, r)| match l2_norm(r) {
            n if n > 0.0 => Ok(n),
            _ => Err(Error::Degenerate(format!("feature row {i} has zero norm"))),
        })
        .collect()
}

/// Mean over rows of `1 − cos(current_n, previous_n)`.
pub fn feat_distill_penalty(current: &Tensor2D, previous: &Tensor2D) -> Result<f64> {
    check(current, previous)?;
    if current.rows() == 0 {
        return Ok(0.0);
    }
    let nc = norms(current)?;
    let np = norms(previous)?;
    let total: f64 = (0..current.rows())
        .map(|i| 1.0 - dot(current.row(i), previous.row(i)) / (nc[i] * np[i]))
        .sum();
    Ok(total / current.rows() as f64)
}

/// Gradient of [`feat_distill_penalty`] with respect to `current`.
pub fn feat_distill_grad(current: &Tensor2D, previous: &Tensor2D) -> Result<Tensor2D> {
    check(current, previous)?;
    let mut grad = Tensor2D::zeros(current.rows(), current.cols());
    if current.rows() == 0 {
        return Ok(grad);
    }
    let nc = norms(current)?;
    let np = norms(previous)?;
    let inv_n = 1.0 / current.rows() as f64;
    for i in 0..current.rows() {
        let (f, g) = (current.row(i), previous.row(i));
        let cos = dot(f, g) / (nc[i] * np[i]);
        for (k, out) in grad.row_mut(i).iter_mut().enumerate() {
            let u = g[k] / np[i];
            let v = f[k] / nc[i];
            *out = -inv_n * (u - cos * v) / nc[i];
        }
    }
    Ok(grad)
}
