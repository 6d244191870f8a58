//! Dense numerics: tensors, the MLP encoder, similarity logits,
//! cross-entropy and SGD.

mod encoder;
mod loss;
mod sgd;
mod tensor;

pub use encoder::{Activation, EncoderModel, ForwardCache, Layer};
pub use loss::{argmax_rows, similarity_backward, similarity_logits, softmax_ce_loss_and_grad, Similarity};
pub use sgd::{SgdConfig, SgdState};
pub use tensor::{cosine, dot, l2_norm, Tensor2D};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// How logits are formed from head rows and embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Objective {
    pub similarity: Similarity,
    pub scale: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            similarity: Similarity::Cosine,
            scale: 16.0,
        }
    }
}

/// Loss and parameter gradients of one batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub encoder: Vec<f64>,
    pub head: Tensor2D,
}

/// Cross-entropy over `objective` logits, differentiated w.r.t. both the
/// encoder parameters and the head rows.
pub fn compute_gradients(
    model: &EncoderModel,
    head: &Tensor2D,
    batch: &Tensor2D,
    labels: &[usize],
    objective: Objective,
) -> Result<Gradients> {
    let cache = model.forward_cached(batch)?;
    let logits = similarity_logits(head, cache.output(), objective.similarity, objective.scale)?;
    let (loss, grad_logits) = softmax_ce_loss_and_grad(&logits, labels)?;
    let (grad_head, grad_features) = similarity_backward(
        head,
        cache.output(),
        objective.similarity,
        objective.scale,
        &grad_logits,
    )?;
    let encoder = model.backward(&cache, &grad_features)?;
    Ok(Gradients {
        loss,
        encoder,
        head: grad_head,
    })
}

#[allow(clippy::too_many_arguments)]
/// One SGD step on a single head. With `frozen_head` the head is never
/// written; otherwise encoder and head both move. Returns the batch loss.
pub fn backward_and_step(
    model: &mut EncoderModel,
    head: &mut Tensor2D,
    batch: &Tensor2D,
    labels: &[usize],
    objective: Objective,
    sgd: &mut SgdState,
    epoch: usize,
    frozen_head: bool,
) -> Result<f64> {
    let grads = compute_gradients(model, head, batch, labels, objective)?;
    sgd.step_encoder(model, &grads.encoder, epoch)?;
    if !frozen_head {
        sgd.step_head(head.data_mut(), grads.head.data(), epoch)?;
    }
    Ok(grads.loss)
}
