use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{EncoderModel, Tensor2D};
use crate::taskstream::{feature_matrix, LabeledExample};

/// Exemplar memory holding raw inputs, keyed by `(task, class)`.
///
/// Raw inputs are stored rather than embeddings, so replayed data is always
/// re-encoded by the current encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity_per_class: usize,
    #[serde(with = "entry_list")]
    entries: BTreeMap<(usize, usize), Vec<LabeledExample>>,
}

/// JSON object keys must be strings, so the map is stored as a list.
mod entry_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::taskstream::LabeledExample;

    type Entries = BTreeMap<(usize, usize), Vec<LabeledExample>>;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        task: usize,
        class_id: usize,
        exemplars: Vec<LabeledExample>,
    }

    pub fn serialize<S: Serializer>(
        map: &Entries,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let list: Vec<Entry> = map
            .iter()
            .map(|(&(task, class_id), ex)| Entry {
                task,
                class_id,
                exemplars: ex.clone(),
            })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Entries, D::Error> {
        Ok(Vec::<Entry>::deserialize(d)?
            .into_iter()
            .map(|e| ((e.task, e.class_id), e.exemplars))
            .collect())
    }
}

impl ReplayBuffer {
    pub fn new(capacity_per_class: usize) -> Self {
        Self {
            capacity_per_class,
            entries: BTreeMap::new(),
        }
    }

    pub fn capacity_per_class(&self) -> usize {
        self.capacity_per_class
    }

    /// Stores exemplars for `class_id` learned in `task`, keeping herding
    /// order and at most `capacity_per_class` of them.
    pub fn insert(&mut self, task: usize, class_id: usize, mut exemplars: Vec<LabeledExample>) {
        exemplars.truncate(self.capacity_per_class);
        self.entries.insert((task, class_id), exemplars);
    }

    pub fn class_len(&self, task: usize, class_id: usize) -> usize {
        self.entries.get(&(task, class_id)).map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All exemplars, ordered by `(task, class)` then herding rank.
    pub fn exemplars(&self) -> impl Iterator<Item = &LabeledExample> {
        self.entries.values().flatten()
    }

    pub fn max_class_len(&self) -> usize {
        self.entries.values().map(Vec::len).max().unwrap_or(0)
    }
}

/// Greedy herding over precomputed embeddings: at step `k` pick the unused
/// row whose addition brings the mean of the selection closest to the
/// class mean. Ties go to the lower index. Returns row indices in pick order.
pub fn herding_order(features: &Tensor2D, m: usize) -> Result<Vec<usize>> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::Empty("herding over an empty class".into()));
    }
    if m > n {
        return Err(Error::Config(format!("cannot select {m} exemplars from {n}")));
    }
    let d = features.cols();
    let mu = features.column_means();
    let mut used = vec![false; n];
    let mut running = vec![0.0; d];
    let mut order = Vec::with_capacity(m);
    for k in 0..m {
        let inv = 1.0 / (k + 1) as f64;
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in features.row_iter().enumerate() {
            if used[i] {
                continue;
            }
            let dist: f64 = mu
                .iter()
                .zip(&running)
                .zip(row)
                .map(|((m, s), x)| {
                    let diff = m - (s + x) * inv;
                    diff * diff
                })
                .sum();
            if best.is_none_or(|(_, b)| dist < b) {
                best = Some((i, dist));
            }
        }
        let (pick, _) = best.expect("m <= n leaves a candidate");
        used[pick] = true;
        running
            .iter_mut()
            .zip(features.row(pick))
            .for_each(|(s, x)| *s += x);
        order.push(pick);
    }
    Ok(order)
}

/// Herding selection of `m` exemplars of one class, embedded by `encoder`.
pub fn herding_select(
    examples: &[LabeledExample],
    encoder: &EncoderModel,
    m: usize,
) -> Result<Vec<LabeledExample>> {
    if examples.is_empty() {
        return Err(Error::Empty("herding over an empty class".into()));
    }
    let features = encoder.forward(&feature_matrix(examples)?)?;
    Ok(herding_order(&features, m)?
        .into_iter()
        .map(|i| examples[i].clone())
        .collect())
}
