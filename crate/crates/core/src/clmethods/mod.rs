//! Sequential training engine and anti-forgetting mechanisms: rehearsal
//! with herding, EWC, feature distillation and gradient projection.

mod buffer;
mod checkpoint;
mod distill;
mod ewc;
mod project;
mod trainer;

pub use buffer::{herding_order, herding_select, ReplayBuffer};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use distill::{feat_distill_grad, feat_distill_penalty, DistillState};
pub use ewc::{estimate_fisher, EwcState};
pub use project::project_gradient;
pub use trainer::{Learner, Method, TaskLog, TrainRunConfig};
