//! Datasets and their split into continual-learning task streams.

mod io;
pub mod synthetic;

pub use io::{format_dataset, load_dataset, load_dataset_pair, parse_dataset, save_dataset, DatasetFile};
pub use synthetic::{generate_synthetic, make_domains, SyntheticDataset, SyntheticHierarchySpec};

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor2D;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub class_id: usize,
    pub class_name: String,
    #[serde(default)]
    pub domain_id: usize,
}

/// A labeled dataset with a fixed train/test partition. `class_id` indexes
/// `class_names`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub input_dim: usize,
    pub class_names: Vec<String>,
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl Dataset {
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    ClassIl,
    TaskIl,
    DomainIl,
    FewshotClassIl,
}

impl Protocol {
    /// Whether evaluation and training logits span every class seen so far.
    pub fn joint_label_space(self) -> bool {
        matches!(self, Protocol::ClassIl | Protocol::FewshotClassIl)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: Protocol,
    /// Classes in the first task.
    #[serde(default)]
    pub initial_classes: usize,
    /// Classes in every later task.
    #[serde(default)]
    pub increment: usize,
    /// Train examples per class for tasks after the first (few-shot only).
    #[serde(default)]
    pub shots: Option<usize>,
    /// Seed of the class-order permutation; falls back to the run seed.
    #[serde(default)]
    pub class_order_seed: Option<u64>,
}

impl ProtocolConfig {
    pub fn class_il(initial_classes: usize, increment: usize) -> Self {
        Self {
            kind: Protocol::ClassIl,
            initial_classes,
            increment,
            shots: None,
            class_order_seed: None,
        }
    }

    /// Number of tasks this config produces for `total` classes.
    pub fn task_count(&self, total: usize) -> Result<usize> {
        match self.kind {
            Protocol::DomainIl => Err(Error::Protocol(
                "domain-IL task count depends on the number of domains".into(),
            )),
            _ => {
                let (b, c) = (self.initial_classes, self.increment);
                if b == 0 || b > total {
                    return Err(Error::Protocol(format!(
                        "initial task size {b} invalid for {total} classes"
                    )));
                }
                if b == total {
                    return Ok(1);
                }
                if c == 0 || !(total - b).is_multiple_of(c) {
                    return Err(Error::Protocol(format!(
                        "{} remaining classes cannot be split into tasks of {c}",
                        total - b
                    )));
                }
                Ok(1 + (total - b) / c)
            }
        }
    }

    pub fn validate(&self, total: usize) -> Result<()> {
        match self.kind {
            Protocol::FewshotClassIl => {
                match self.shots {
                    Some(k) if k > 0 => {}
                    _ => {
                        return Err(Error::Protocol(
                            "few-shot protocol needs a positive shot count".into(),
                        ))
                    }
                }
                self.task_count(total).map(|_| ())
            }
            Protocol::DomainIl => Ok(()),
            _ => self.task_count(total).map(|_| ()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub index: usize,
    pub class_ids: Vec<usize>,
    pub class_names: Vec<String>,
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    /// `None` means every available example is used.
    pub shots_per_class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStream {
    pub protocol: Protocol,
    pub class_order: Vec<usize>,
    pub class_names: Vec<String>,
    pub tasks: Vec<TaskSpec>,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Stacks the features of `examples` into a batch tensor.
pub fn feature_matrix(examples: &[LabeledExample]) -> Result<Tensor2D> {
    Tensor2D::from_rows(&examples.iter().map(|e| &e.features[..]).collect::<Vec<_>>())
}

fn seeded_class_order(total: usize, config: &ProtocolConfig, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = substream(config.class_order_seed.unwrap_or(seed), "class_order");
    order.shuffle(&mut rng);
    order
}

/// Splits `dataset` into the task sequence described by `config`.
///
/// The class order is a seeded permutation, so every method run with the
/// same seeds sees the same order.
pub fn split_protocol(dataset: &Dataset, config: &ProtocolConfig, seed: u64) -> Result<TaskStream> {
    let total = dataset.class_count();
    if total == 0 {
        return Err(Error::Protocol("dataset has no classes".into()));
    }
    config.validate(total)?;
    let class_order = seeded_class_order(total, config, seed);
    let names_of = |ids: &[usize]| -> Vec<String> {
        ids.iter().map(|&c| dataset.class_names[c].clone()).collect()
    };

    if config.kind == Protocol::DomainIl {
        let domains: BTreeSet<usize> = dataset.train.iter().map(|e| e.domain_id).collect();
        let tasks = domains
            .into_iter()
            .enumerate()
            .map(|(index, domain)| {
                let pick = |set: &[LabeledExample]| -> Vec<LabeledExample> {
                    set.iter().filter(|e| e.domain_id == domain).cloned().collect()
                };
                TaskSpec {
                    index,
                    class_ids: class_order.clone(),
                    class_names: names_of(&class_order),
                    train: pick(&dataset.train),
                    test: pick(&dataset.test),
                    shots_per_class: None,
                }
            })
            .collect();
        return Ok(TaskStream {
            protocol: config.kind,
            class_order,
            class_names: dataset.class_names.clone(),
            tasks,
        });
    }

    let task_count = config.task_count(total)?;
    let mut fewshot_rng = substream(seed, "fewshot");
    let mut tasks = Vec::with_capacity(task_count);
    let mut start = 0;
    for index in 0..task_count {
        let size = if index == 0 {
            config.initial_classes
        } else {
            config.increment
        };
        let class_ids = class_order[start..start + size].to_vec();
        start += size;
        let members: BTreeSet<usize> = class_ids.iter().copied().collect();
        let mut train: Vec<LabeledExample> = dataset
            .train
            .iter()
            .filter(|e| members.contains(&e.class_id))
            .cloned()
            .collect();
        let test = dataset
            .test
            .iter()
            .filter(|e| members.contains(&e.class_id))
            .cloned()
            .collect();
        let mut shots_per_class = None;
        if config.kind == Protocol::FewshotClassIl && index > 0 {
            let k = config.shots.expect("validated");
            let mut picked = Vec::with_capacity(k * class_ids.len());
            for &class in &class_ids {
                let mut pool: Vec<LabeledExample> =
                    train.iter().filter(|e| e.class_id == class).cloned().collect();
                if pool.len() < k {
                    return Err(Error::Protocol(format!(
                        "class {} has {} train examples, {k} shots requested",
                        dataset.class_names[class],
                        pool.len()
                    )));
                }
                pool.shuffle(&mut fewshot_rng);
                pool.truncate(k);
                picked.extend(pool);
            }
            train = picked;
            shots_per_class = Some(k);
        }
        tasks.push(TaskSpec {
            index,
            class_names: names_of(&class_ids),
            class_ids,
            train,
            test,
            shots_per_class,
        });
    }
    Ok(TaskStream {
        protocol: config.kind,
        class_order,
        class_names: dataset.class_names.clone(),
        tasks,
    })
}

/// Classes a model must discriminate after training task `t`: the union of
/// task label sets up to `t` in task order. Domain-IL streams share one
/// label set, so the answer is constant.
pub fn grow_label_space(stream: &TaskStream, t: usize) -> Result<Vec<usize>> {
    if t >= stream.tasks.len() {
        return Err(Error::Protocol(format!(
            "task {t} requested from a stream of {} tasks",
            stream.tasks.len()
        )));
    }
    if stream.protocol == Protocol::DomainIl {
        return Ok(stream.tasks[0].class_ids.clone());
    }
    Ok(stream.tasks[..=t]
        .iter()
        .flat_map(|task| task.class_ids.iter().copied())
        .collect())
}
