//! Similarity logits between classifier rows and embeddings, and the
//! softmax cross-entropy loss trained on top of them.

use serde::{Deserialize, Serialize};

use super::tensor::{dot, l2_norm, Tensor2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    Inner,
    #[default]
    Cosine,
}

fn check_dims(head: &Tensor2D, features: &Tensor2D) -> Result<()> {
    if head.cols() != features.cols() {
        return Err(Error::Shape(format!(
            "head rows have width {}, features have width {}",
            head.cols(),
            features.cols()
        )));
    }
    Ok(())
}

fn row_norms(t: &Tensor2D, what: &str) -> Result<Vec<f64>> {
    t.row_iter()
        .enumerate()
        .map(|(i, r)| {
            let n = l2_norm(r);
            if n == 0.0 {
                Err(Error::Degenerate(format!("{what} row {i} has zero norm")))
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// `out[n][c] = scale · sim(head_c, features_n)`.
pub fn similarity_logits(
    head: &Tensor2D,
    features: &Tensor2D,
    mode: Similarity,
    scale: f64,
) -> Result<Tensor2D> {
    check_dims(head, features)?;
    let mut logits = features.matmul_t(head)?;
    match mode {
        Similarity::Inner => logits.scale(scale),
        Similarity::Cosine => {
            let hn = row_norms(head, "head")?;
            let fnorm = row_norms(features, "feature")?;
            for (n, f) in fnorm.iter().enumerate() {
                for (c, h) in hn.iter().enumerate() {
                    let v = logits.get(n, c);
                    logits.set(n, c, scale * v / (f * h));
                }
            }
        }
    }
    Ok(logits)
}

/// Gradients of a loss with respect to the head and the features, given
/// `grad_logits` = dL/d logits. Returns `(grad_head, grad_features)`.
pub fn similarity_backward(
    head: &Tensor2D,
    features: &Tensor2D,
    mode: Similarity,
    scale: f64,
    grad_logits: &Tensor2D,
) -> Result<(Tensor2D, Tensor2D)> {
    check_dims(head, features)?;
    if grad_logits.rows() != features.rows() || grad_logits.cols() != head.rows() {
        return Err(Error::Shape(format!(
            "logit gradient is {}x{}, expected {}x{}",
            grad_logits.rows(),
            grad_logits.cols(),
            features.rows(),
            head.rows()
        )));
    }
    match mode {
        Similarity::Inner => {
            let mut gh = grad_logits.t_matmul(features)?;
            gh.scale(scale);
            let mut gf = grad_logits.matmul(head)?;
            gf.scale(scale);
            Ok((gh, gf))
        }
        Similarity::Cosine => {
            let d = head.cols();
            let hn = row_norms(head, "head")?;
            let fnorm = row_norms(features, "feature")?;
            let mut gh = Tensor2D::zeros(head.rows(), d);
            let mut gf = Tensor2D::zeros(features.rows(), d);
            // with u = h/|h|, v = f/|f|, c = u·v:
            // dc/df = (u − c v)/|f|,  dc/dh = (v − c u)/|h|
            for n in 0..features.rows() {
                let f = features.row(n);
                for c in 0..head.rows() {
                    let g = grad_logits.get(n, c);
                    if g == 0.0 {
                        continue;
                    }
                    let h = head.row(c);
                    let cos = dot(h, f) / (hn[c] * fnorm[n]);
                    let gs = g * scale;
                    {
                        let gf_row = gf.row_mut(n);
                        for k in 0..d {
                            let u = h[k] / hn[c];
                            let v = f[k] / fnorm[n];
                            gf_row[k] += gs * (u - cos * v) / fnorm[n];
                        }
                    }
                    let gh_row = gh.row_mut(c);
                    for k in 0..d {
                        let u = h[k] / hn[c];
                        let v = f[k] / fnorm[n];
                        gh_row[k] += gs * (v - cos * u) / hn[c];
                    }
                }
            }
            Ok((gh, gf))
        }
    }
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. logits.
pub fn softmax_ce_loss_and_grad(logits: &Tensor2D, labels: &[usize]) -> Result<(f64, Tensor2D)> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let classes = logits.cols();
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Label { label, classes });
    }
    let n = logits.rows();
    if n == 0 {
        return Ok((0.0, Tensor2D::zeros(0, classes)));
    }
    let mut grad = Tensor2D::zeros(n, classes);
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln() + max;
        loss += log_sum - row[label];
        let g = grad.row_mut(i);
        for (c, gv) in g.iter_mut().enumerate() {
            let p = (row[c] - log_sum).exp();
            *gv = (p - if c == label { 1.0 } else { 0.0 }) * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}

/// Row-wise argmax (first maximum wins).
pub fn argmax_rows(logits: &Tensor2D) -> Vec<usize> {
    logits
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
