//! Accuracy-matrix summaries, representation drift and class-mean
//! correlation.

mod accuracy;
mod correlation;
mod drift;

pub use accuracy::{
    avg_incremental_accuracy, forgetting_rate, last_accuracy, AccuracyMatrix, MetricSummary,
};
pub use correlation::{interclass_correlation, CorrelationReport};
pub use drift::{repre_drift, top_subspace};

/// One drift measurement: task `task`'s features right after it was learned
/// versus after training on `after`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DriftPoint {
    pub task: usize,
    pub after: usize,
    pub drift: f64,
}

pub fn drift_csv(points: &[DriftPoint]) -> String {
    let mut out = String::from("task,after_task,drift\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.task, p.after, p.drift));
    }
    out
}
