//! Sequential training across tasks with pluggable anti-forgetting methods.

use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{herding_select, ReplayBuffer};
use super::distill::{feat_distill_grad, feat_distill_penalty, DistillState};
use super::ewc::{estimate_fisher, EwcState};
use super::project::project_gradient;
use crate::error::{Error, Result};
use crate::numcore::{
    argmax_rows, similarity_backward, similarity_logits, softmax_ce_loss_and_grad, EncoderModel,
    Objective, SgdConfig, SgdState, Tensor2D,
};
use crate::supervision::ClassifierHead;
use crate::taskstream::{feature_matrix, LabeledExample, Protocol, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Finetune,
    Rehearsal,
    Ewc,
    FeatDistill,
    GradProject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRunConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub objective: Objective,
    pub methods: Vec<Method>,
    pub memory_per_class: usize,
    pub ewc_lambda: f64,
    /// Examples per task used for the Fisher estimate.
    pub fisher_samples: usize,
    pub distill_weight: f64,
    /// Whether replayed exemplars also enter the distillation penalty.
    pub distill_on_replay: bool,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            sgd: SgdConfig::default(),
            objective: Objective::default(),
            methods: vec![Method::Finetune, Method::Rehearsal],
            memory_per_class: 20,
            ewc_lambda: 100.0,
            fisher_samples: 200,
            distill_weight: 1.0,
            distill_on_replay: true,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.methods.contains(&Method::Finetune) {
            return Err(Error::Config("method set must include finetune".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.objective.scale > 0.0) {
            return Err(Error::Config("similarity scale must be positive".into()));
        }
        self.sgd.validate()
    }

    pub fn uses(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }

    fn keeps_exemplars(&self) -> bool {
        self.uses(Method::Rehearsal) || self.uses(Method::GradProject)
    }
}

/// Per-task training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLog {
    pub task_index: usize,
    /// Mean total loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Everything a run carries from one task to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    protocol: Protocol,
    encoder: EncoderModel,
    head: ClassifierHead,
    buffer: ReplayBuffer,
    ewc: Option<EwcState>,
    distill: Option<DistillState>,
    rng: ChaCha8Rng,
    tasks_trained: usize,
}

/// How a batch row is scored: against which head blocks, with which label.
struct Assignment {
    space: usize,
    label: usize,
}

/// Stacked head blocks forming one softmax.
struct LogitSpace {
    weights: Tensor2D,
    /// Row offset of the active block inside `weights`, if present.
    active_offset: Option<usize>,
}

impl Learner {
    pub fn new(protocol: Protocol, encoder: EncoderModel, head: ClassifierHead, memory_per_class: usize, rng: ChaCha8Rng) -> Self {
        Self {
            protocol,
            encoder,
            head,
            buffer: ReplayBuffer::new(memory_per_class),
            ewc: None,
            distill: None,
            rng,
            tasks_trained: 0,
        }
    }

    pub fn encoder(&self) -> &EncoderModel {
        &self.encoder
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn ewc(&self) -> Option<&EwcState> {
        self.ewc.as_ref()
    }

    pub fn distill(&self) -> Option<&DistillState> {
        self.distill.as_ref()
    }

    pub fn tasks_trained(&self) -> usize {
        self.tasks_trained
    }

    /// Appends head blocks for an incoming task.
    pub fn add_head(&mut self, block: ClassifierHead) -> Result<()> {
        self.head.extend(block)
    }

    fn active_block(&self, task: &TaskSpec) -> Result<usize> {
        let idx = if self.protocol == Protocol::DomainIl {
            if self.head.blocks().is_empty() {
                None
            } else {
                Some(0)
            }
        } else {
            self.head.block_for_task(task.index)
        };
        let idx = idx.ok_or_else(|| {
            Error::Protocol(format!("no head block for task {}", task.index))
        })?;
        let block = &self.head.blocks()[idx];
        if let Some(c) = task.class_ids.iter().find(|c| !block.class_ids().contains(c)) {
            return Err(Error::Protocol(format!(
                "head block of task {} lacks class {c}",
                task.index
            )));
        }
        Ok(idx)
    }

    /// Logit spaces and per-example assignments for a set of examples.
    fn assign(&self, examples: &[&LabeledExample], active: Option<usize>) -> Result<(Vec<LogitSpace>, Vec<Assignment>)> {
        let blocks = self.head.blocks();
        let mut spaces: Vec<LogitSpace> = Vec::new();
        let mut space_of_block: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut label_maps: Vec<HashMap<usize, usize>> = Vec::new();
        let mut out = Vec::with_capacity(examples.len());
        for e in examples {
            let block_set: Vec<usize> = match self.protocol {
                Protocol::ClassIl | Protocol::FewshotClassIl => (0..blocks.len()).collect(),
                Protocol::DomainIl => vec![0],
                Protocol::TaskIl => vec![self.head.block_of_class(e.class_id).ok_or_else(|| {
                    Error::Protocol(format!("class {} has no head block", e.class_id))
                })?],
            };
            let space = match space_of_block.get(&block_set) {
                Some(&s) => s,
                None => {
                    let (weights, ids) = self.head.stacked(&block_set)?;
                    let mut offset = 0;
                    let mut active_offset = None;
                    for &b in &block_set {
                        if Some(b) == active {
                            active_offset = Some(offset);
                        }
                        offset += blocks[b].class_ids().len();
                    }
                    let map: HashMap<usize, usize> =
                        ids.iter().enumerate().map(|(row, &c)| (c, row)).collect();
                    spaces.push(LogitSpace {
                        weights,
                        active_offset,
                    });
                    label_maps.push(map);
                    space_of_block.insert(block_set, spaces.len() - 1);
                    spaces.len() - 1
                }
            };
            let label = *label_maps[space].get(&e.class_id).ok_or_else(|| {
                Error::Protocol(format!("class {} is outside the current label space", e.class_id))
            })?;
            out.push(Assignment { space, label });
        }
        Ok((spaces, out))
    }

    /// Cross-entropy gradients of a batch: `(loss, d features, d active block)`.
    fn ce_gradients(
        &self,
        features: &Tensor2D,
        spaces: &[LogitSpace],
        assignments: &[Assignment],
        objective: Objective,
        active_rows: usize,
    ) -> Result<(f64, Tensor2D, Vec<f64>)> {
        let n = assignments.len();
        let d = features.cols();
        let mut grad_features = Tensor2D::zeros(n, d);
        let mut grad_head = vec![0.0; active_rows * d];
        let mut loss = 0.0;
        for (s, space) in spaces.iter().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assignments[i].space == s).collect();
            if members.is_empty() {
                continue;
            }
            let feats = features.select_rows(&members);
            let labels: Vec<usize> = members.iter().map(|&i| assignments[i].label).collect();
            let logits = similarity_logits(&space.weights, &feats, objective.similarity, objective.scale)?;
            let (l, mut gl) = softmax_ce_loss_and_grad(&logits, &labels)?;
            // group mean → batch mean
            let share = members.len() as f64 / n as f64;
            loss += l * share;
            gl.scale(share);
            let (gw, gf) = similarity_backward(&space.weights, &feats, objective.similarity, objective.scale, &gl)?;
            for (k, &i) in members.iter().enumerate() {
                grad_features.row_mut(i).copy_from_slice(gf.row(k));
            }
            if let Some(offset) = space.active_offset {
                for r in 0..active_rows {
                    let dst = &mut grad_head[r * d..(r + 1) * d];
                    dst.iter_mut()
                        .zip(gw.row(offset + r))
                        .for_each(|(a, b)| *a += b);
                }
            }
        }
        Ok((loss, grad_features, grad_head))
    }

    /// Trains on `task` for `config.epochs` epochs, then updates exemplar
    /// memory, the EWC anchor and the distillation snapshot.
    pub fn train_task(&mut self, task: &TaskSpec, config: &TrainRunConfig) -> Result<TaskLog> {
        config.validate()?;
        if task.train.is_empty() {
            return Err(Error::Protocol(format!("task {} has no training data", task.index)));
        }
        let active = self.active_block(task)?;
        let trainable = !self.head.is_frozen();
        let active_rows = self.head.blocks()[active].class_ids().len();
        let d = self.encoder.output_dim();
        let mut sgd = SgdState::new(
            config.sgd.clone(),
            self.encoder.num_params(),
            if trainable { active_rows * d } else { 0 },
        );

        let mut pool: Vec<LabeledExample> = task.train.clone();
        let current_len = pool.len();
        if config.uses(Method::Rehearsal) {
            pool.extend(self.buffer.exemplars().cloned());
        }
        let replay: Vec<LabeledExample> = if config.uses(Method::GradProject) {
            self.buffer.exemplars().cloned().collect()
        } else {
            Vec::new()
        };

        let mut order: Vec<usize> = (0..pool.len()).collect();
        let mut epoch_losses = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            order.shuffle(&mut self.rng);
            let mut total = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(config.batch_size) {
                let batch: Vec<&LabeledExample> = chunk.iter().map(|&i| &pool[i]).collect();
                let is_current: Vec<bool> = chunk.iter().map(|&i| i < current_len).collect();
                total += self.step(&batch, &is_current, &replay, active, active_rows, &mut sgd, epoch, config)?;
                batches += 1;
            }
            epoch_losses.push(total / batches.max(1) as f64);
        }
        self.consolidate(task, active, config)?;
        self.tasks_trained += 1;
        Ok(TaskLog {
            task_index: task.index,
            epoch_losses,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        batch: &[&LabeledExample],
        is_current: &[bool],
        replay: &[LabeledExample],
        active: usize,
        active_rows: usize,
        sgd: &mut SgdState,
        epoch: usize,
        config: &TrainRunConfig,
    ) -> Result<f64> {
        let trainable = !self.head.is_frozen();
        let inputs = Tensor2D::from_rows(&batch.iter().map(|e| &e.features[..]).collect::<Vec<_>>())?;
        let (spaces, assignments) = self.assign(batch, Some(active))?;
        let cache = self.encoder.forward_cached(&inputs)?;
        let features = cache.output();
        let (mut loss, mut grad_features, mut grad_head) =
            self.ce_gradients(features, &spaces, &assignments, config.objective, active_rows)?;

        if config.uses(Method::FeatDistill) {
            if let Some(distill) = &self.distill {
                let rows: Vec<usize> = (0..batch.len())
                    .filter(|&i| config.distill_on_replay || is_current[i])
                    .collect();
                if !rows.is_empty() {
                    let sub_inputs = inputs.select_rows(&rows);
                    let old = distill.snapshot().forward(&sub_inputs)?;
                    let cur = features.select_rows(&rows);
                    // penalty is averaged over its rows, rescaled to the batch
                    let share = rows.len() as f64 / batch.len() as f64;
                    loss += distill.weight * share * feat_distill_penalty(&cur, &old)?;
                    let g = feat_distill_grad(&cur, &old)?;
                    for (k, &i) in rows.iter().enumerate() {
                        grad_features
                            .row_mut(i)
                            .iter_mut()
                            .zip(g.row(k))
                            .for_each(|(a, b)| *a += distill.weight * share * b);
                    }
                }
            }
        }

        let mut grad_encoder = self.encoder.backward(&cache, &grad_features)?;

        if config.uses(Method::GradProject) && !replay.is_empty() {
            let take = config.batch_size.min(replay.len());
            let picks = index::sample(&mut self.rng, replay.len(), take).into_vec();
            let ref_batch: Vec<&LabeledExample> = picks.iter().map(|&i| &replay[i]).collect();
            let ref_inputs =
                Tensor2D::from_rows(&ref_batch.iter().map(|e| &e.features[..]).collect::<Vec<_>>())?;
            let (ref_spaces, ref_assign) = self.assign(&ref_batch, Some(active))?;
            let ref_cache = self.encoder.forward_cached(&ref_inputs)?;
            let (_, ref_gf, ref_gh) =
                self.ce_gradients(ref_cache.output(), &ref_spaces, &ref_assign, config.objective, active_rows)?;
            let ref_encoder = self.encoder.backward(&ref_cache, &ref_gf)?;
            let split = grad_encoder.len();
            let mut g = grad_encoder;
            let mut g_ref = ref_encoder;
            if trainable {
                g.extend_from_slice(&grad_head);
                g_ref.extend_from_slice(&ref_gh);
            }
            let projected = project_gradient(&g, &g_ref);
            grad_encoder = projected[..split].to_vec();
            if trainable {
                grad_head = projected[split..].to_vec();
            }
        }

        if let Some(ewc) = &self.ewc {
            if config.uses(Method::Ewc) {
                loss += ewc.penalty(&self.encoder.params_flat());
            }
        }

        sgd.step_encoder(&mut self.encoder, &grad_encoder, epoch)?;
        if config.uses(Method::Ewc) {
            if let Some(ewc) = &self.ewc {
                ewc.proximal_step(&mut self.encoder, config.sgd.rate_at(epoch));
            }
        }
        if trainable {
            let weights = self
                .head
                .trainable_weights_mut(active)
                .expect("trainable regime");
            sgd.step_head(weights.data_mut(), &grad_head, epoch)?;
        }
        Ok(loss)
    }

    fn consolidate(&mut self, task: &TaskSpec, active: usize, config: &TrainRunConfig) -> Result<()> {
        if config.keeps_exemplars() && config.memory_per_class > 0 {
            for &class in &task.class_ids {
                let members: Vec<LabeledExample> = task
                    .train
                    .iter()
                    .filter(|e| e.class_id == class)
                    .cloned()
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let m = config.memory_per_class.min(members.len());
                let chosen = herding_select(&members, &self.encoder, m)?;
                self.buffer.insert(task.index, class, chosen);
            }
        }
        if config.uses(Method::Ewc) {
            let n = config.fisher_samples.min(task.train.len());
            let sample: Vec<&LabeledExample> = task.train.iter().take(n).collect();
            let (spaces, assign) = self.assign(&sample, Some(active))?;
            let params = self.encoder.params_flat();
            let mut fisher = vec![0.0; params.len()];
            // one estimate per logit space, weighted by its share of the sample
            for (s, space) in spaces.iter().enumerate() {
                let members: Vec<usize> = (0..sample.len()).filter(|&i| assign[i].space == s).collect();
                let inputs = Tensor2D::from_rows(
                    &members.iter().map(|&i| &sample[i].features[..]).collect::<Vec<_>>(),
                )?;
                let labels: Vec<usize> = members.iter().map(|&i| assign[i].label).collect();
                let f = estimate_fisher(&self.encoder, &space.weights, &inputs, &labels, config.objective)?;
                let share = members.len() as f64 / sample.len().max(1) as f64;
                fisher.iter_mut().zip(&f).for_each(|(a, b)| *a += share * b);
            }
            match &mut self.ewc {
                Some(state) => state.consolidate(params, &fisher)?,
                None => self.ewc = Some(EwcState::new(params, fisher, config.ewc_lambda)?),
            }
        }
        if config.uses(Method::FeatDistill) {
            self.distill = Some(DistillState::new(self.encoder.clone(), config.distill_weight));
        }
        Ok(())
    }

    /// Fraction of `examples` classified correctly. `task_index` selects the
    /// label space for task-incremental evaluation; the other protocols score
    /// against every class seen so far.
    pub fn accuracy(&self, examples: &[LabeledExample], task_index: usize, objective: Objective) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Empty("accuracy over an empty test set".into()));
        }
        let blocks: Vec<usize> = match self.protocol {
            Protocol::ClassIl | Protocol::FewshotClassIl => (0..self.head.blocks().len()).collect(),
            Protocol::DomainIl => vec![0],
            Protocol::TaskIl => vec![self.head.block_for_task(task_index).ok_or_else(|| {
                Error::Protocol(format!("no head block for task {task_index}"))
            })?],
        };
        if blocks.is_empty() || self.head.blocks().is_empty() {
            return Err(Error::Protocol("head has no blocks".into()));
        }
        let (weights, ids) = self.head.stacked(&blocks)?;
        let features = self.encoder.forward(&feature_matrix(examples)?)?;
        let logits = similarity_logits(&weights, &features, objective.similarity, objective.scale)?;
        let correct = argmax_rows(&logits)
            .into_iter()
            .zip(examples)
            .filter(|(p, e)| ids[*p] == e.class_id)
            .count();
        Ok(correct as f64 / examples.len() as f64)
    }

    pub fn features(&self, examples: &[LabeledExample]) -> Result<Tensor2D> {
        self.encoder.forward(&feature_matrix(examples)?)
    }
}
