use serde::{Deserialize, Serialize};

use super::experiment::RunRecord;
use crate::error::{Error, Result};

/// Mean and population standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub seeds: usize,
    pub last: Stat,
    pub avg: Stat,
    pub forget: Option<Stat>,
    pub delta_last: f64,
    pub delta_avg: f64,
    pub delta_forget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub protocol_fingerprint: String,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "name,seeds,last_mean,last_std,avg_mean,avg_std,forget_mean,forget_std,delta_last,delta_avg,delta_forget\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.name,
                r.seeds,
                r.last.mean,
                r.last.std,
                r.avg.mean,
                r.avg.std,
                opt(r.forget.map(|s| s.mean)),
                opt(r.forget.map(|s| s.std)),
                r.delta_last,
                r.delta_avg,
                opt(r.delta_forget),
            ));
        }
        out
    }

    pub fn row(&self, name: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

struct Stats {
    seeds: usize,
    last: Stat,
    avg: Stat,
    forget: Option<Stat>,
}

fn stats(record: &RunRecord) -> Result<Stats> {
    let done: Vec<_> = record.completed().collect();
    let last: Vec<f64> = done.iter().map(|r| r.summary.last).collect();
    let avg: Vec<f64> = done.iter().map(|r| r.summary.avg).collect();
    let forget: Option<Vec<f64>> = done.iter().map(|r| r.summary.forget).collect();
    let empty = || Error::Comparison(format!("record {} has no completed seeds", record.name));
    Ok(Stats {
        seeds: done.len(),
        last: Stat::of(&last).ok_or_else(empty)?,
        avg: Stat::of(&avg).ok_or_else(empty)?,
        forget: forget.and_then(|f| Stat::of(&f)),
    })
}

/// Per-record Last/Avg/Forget statistics with deltas against the record
/// named `baseline`.
pub fn compare(records: &[RunRecord], baseline: &str) -> Result<ComparisonTable> {
    let first = records
        .first()
        .ok_or_else(|| Error::Comparison("nothing to compare".into()))?;
    if let Some(r) = records
        .iter()
        .find(|r| r.protocol_fingerprint != first.protocol_fingerprint)
    {
        return Err(Error::Comparison(format!(
            "records {} and {} use different protocols",
            first.name, r.name
        )));
    }
    let base = records
        .iter()
        .find(|r| r.name == baseline)
        .ok_or_else(|| Error::Comparison(format!("baseline {baseline} not among records")))?;
    let b = stats(base)?;
    let rows = records
        .iter()
        .map(|r| {
            let s = stats(r)?;
            Ok(ComparisonRow {
                name: r.name.clone(),
                seeds: s.seeds,
                delta_last: s.last.mean - b.last.mean,
                delta_avg: s.avg.mean - b.avg.mean,
                delta_forget: match (s.forget, b.forget) {
                    (Some(x), Some(y)) => Some(x.mean - y.mean),
                    _ => None,
                },
                last: s.last,
                avg: s.avg,
                forget: s.forget,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ComparisonTable {
        baseline: baseline.to_string(),
        protocol_fingerprint: first.protocol_fingerprint.clone(),
        rows,
    })
}
