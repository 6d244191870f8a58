use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::head::{build_random_head, BlockClasses};
use super::targets::SemanticTargetTable;
use crate::error::{Error, Result};
use crate::numcore::{
    argmax_rows, backward_and_step, similarity_logits, EncoderModel, Objective, SgdConfig, SgdState,
    Tensor2D,
};
use crate::rng::{sha256_hex, substream};
use crate::taskstream::{feature_matrix, Dataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub hidden: Vec<usize>,
    pub dim: usize,
    pub objective: Objective,
    pub sgd: SgdConfig,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            dim: 32,
            objective: Objective::default(),
            sgd: SgdConfig::default(),
            epochs: 30,
            batch_size: 32,
        }
    }
}

/// Classifier rows of a model trained jointly on every class at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleArtifact {
    pub class_names: Vec<String>,
    /// One row per class id of the source dataset.
    pub weights: Tensor2D,
    /// Accuracy of the jointly trained model on its own training data.
    pub train_accuracy: f64,
    /// Hash of the training configuration and seed.
    pub config_fingerprint: String,
}

impl OracleArtifact {
    /// Rows as a (normalized) target table keyed by class name.
    pub fn to_table(&self) -> Result<SemanticTargetTable> {
        let mut table = SemanticTargetTable::new(self.weights.cols());
        for (i, name) in self.class_names.iter().enumerate() {
            table.insert(name, self.weights.row(i).to_vec())?;
        }
        Ok(table)
    }
}

/// Trains encoder and a trainable head on all of `dataset.train` jointly and
/// keeps the head.
pub fn build_oracle_head(dataset: &Dataset, config: &OracleConfig, seed: u64) -> Result<OracleArtifact> {
    if dataset.train.is_empty() {
        return Err(Error::Empty("oracle needs training data".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    config.sgd.validate()?;
    let mut init = substream(seed, "oracle/init");
    let mut model = EncoderModel::mlp(dataset.input_dim, &config.hidden, config.dim, &mut init)?;
    let ids: Vec<usize> = (0..dataset.class_count()).collect();
    let head = build_random_head(
        BlockClasses {
            task_index: 0,
            class_ids: &ids,
            class_names: &dataset.class_names,
        },
        config.dim,
        &mut init,
    )?;
    let mut weights = head.blocks()[0].weights().clone();
    let inputs = feature_matrix(&dataset.train)?;
    let labels: Vec<usize> = dataset.train.iter().map(|e| e.class_id).collect();
    let mut sgd = SgdState::new(config.sgd.clone(), model.num_params(), weights.data().len());
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut sampling = substream(seed, "oracle/sampling");
    for epoch in 0..config.epochs {
        order.shuffle(&mut sampling);
        for chunk in order.chunks(config.batch_size) {
            let batch = inputs.select_rows(chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            backward_and_step(
                &mut model,
                &mut weights,
                &batch,
                &batch_labels,
                config.objective,
                &mut sgd,
                epoch,
                false,
            )?;
        }
    }
    let features = model.forward(&inputs)?;
    let logits = similarity_logits(&weights, &features, config.objective.similarity, config.objective.scale)?;
    let correct = argmax_rows(&logits)
        .iter()
        .zip(&labels)
        .filter(|(p, l)| p == l)
        .count();
    let fingerprint = sha256_hex(
        format!("{}:{seed}", serde_json::to_string(config)?).as_bytes(),
    );
    Ok(OracleArtifact {
        class_names: dataset.class_names.clone(),
        weights,
        train_accuracy: correct as f64 / labels.len() as f64,
        config_fingerprint: fingerprint,
    })
}
