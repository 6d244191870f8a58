use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `A[i][j]`: accuracy on task `i`'s test set after training task `j`,
/// defined for `i ≤ j` (0-based here).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    tasks: usize,
    /// `cells[j][i]` for `i ≤ j`: one row per training step.
    cells: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    pub fn new(tasks: usize) -> Self {
        Self {
            tasks,
            cells: (0..tasks).map(|j| vec![None; j + 1]).collect(),
        }
    }

    /// Builds a complete matrix from per-step rows: `steps[j][i] = A[i][j]`.
    pub fn from_steps(steps: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::new(steps.len());
        for (j, row) in steps.iter().enumerate() {
            if row.len() != j + 1 {
                return Err(Error::Shape(format!(
                    "step {j} has {} entries, expected {}",
                    row.len(),
                    j + 1
                )));
            }
            for (i, &v) in row.iter().enumerate() {
                m.set(i, j, v)?;
            }
        }
        Ok(m)
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn set(&mut self, task: usize, after: usize, value: f64) -> Result<()> {
        if task > after || after >= self.tasks {
            return Err(Error::Shape(format!(
                "A[{task}][{after}] outside the lower triangle of {} tasks",
                self.tasks
            )));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Shape(format!("accuracy {value} outside [0, 1]")));
        }
        self.cells[after][task] = Some(value);
        Ok(())
    }

    pub fn get(&self, task: usize, after: usize) -> Option<f64> {
        self.cells.get(after)?.get(task).copied().flatten()
    }

    fn require(&self, task: usize, after: usize) -> Result<f64> {
        self.get(task, after)
            .ok_or_else(|| Error::Incomplete(format!("A[{task}][{after}] missing")))
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().flatten().all(Option::is_some)
    }

    /// Accuracies of task `i` after each step `j ≥ i`.
    pub fn task_curve(&self, task: usize) -> Vec<Option<f64>> {
        (task..self.tasks).map(|j| self.get(task, j)).collect()
    }

    /// CSV with one row per training step `j` and one column per task `i`;
    /// cells with `i > j` are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("after_task");
        for i in 0..self.tasks {
            out.push_str(&format!(",task_{i}"));
        }
        out.push('\n');
        for j in 0..self.tasks {
            out.push_str(&j.to_string());
            for i in 0..self.tasks {
                out.push(',');
                if let Some(v) = self.get(i, j) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty accuracy CSV".into(),
        })?;
        let tasks = header.split(',').count().saturating_sub(1);
        let mut m = Self::new(tasks);
        for (j, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != tasks + 1 {
                return Err(Error::Parse {
                    line: j + 2,
                    msg: format!("{} columns, expected {}", cols.len(), tasks + 1),
                });
            }
            for (i, cell) in cols[1..].iter().enumerate() {
                if cell.is_empty() {
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line: j + 2,
                    msg: format!("bad value {cell:?}"),
                })?;
                m.set(i, j, v).map_err(|e| Error::Parse {
                    line: j + 2,
                    msg: e.to_string(),
                })?;
            }
        }
        Ok(m)
    }
}

/// `(1/N) Σ_i A[i][N]`.
pub fn last_accuracy(a: &AccuracyMatrix) -> Result<f64> {
    let n = a.tasks();
    if n == 0 {
        return Err(Error::Incomplete("empty accuracy matrix".into()));
    }
    let mut sum = 0.0;
    for i in 0..n {
        sum += a.require(i, n - 1)?;
    }
    Ok(sum / n as f64)
}

/// `(1/N) Σ_j (1/j) Σ_{i≤j} A[i][j]` (1-based `j`).
pub fn avg_incremental_accuracy(a: &AccuracyMatrix) -> Result<f64> {
    let n = a.tasks();
    if n == 0 {
        return Err(Error::Incomplete("empty accuracy matrix".into()));
    }
    let mut outer = 0.0;
    for j in 0..n {
        let mut inner = 0.0;
        for i in 0..=j {
            inner += a.require(i, j)?;
        }
        outer += inner / (j + 1) as f64;
    }
    Ok(outer / n as f64)
}

/// `(1/(N−1)) Σ_{i<N} (max_{j<N} A[i][j] − A[i][N])`. Negative when later
/// tasks improve earlier ones.
pub fn forgetting_rate(a: &AccuracyMatrix) -> Result<f64> {
    let n = a.tasks();
    if n < 2 {
        return Err(Error::Undefined(
            "forgetting needs at least two tasks".into(),
        ));
    }
    let mut sum = 0.0;
    for i in 0..n - 1 {
        let mut best = f64::NEG_INFINITY;
        for j in i..n - 1 {
            best = best.max(a.require(i, j)?);
        }
        sum += best - a.require(i, n - 1)?;
    }
    Ok(sum / (n - 1) as f64)
}

/// Last / Avg / Forget plus per-task curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub last: f64,
    pub avg: f64,
    /// `None` for single-task streams.
    pub forget: Option<f64>,
    pub per_task: Vec<Vec<f64>>,
}

impl MetricSummary {
    pub fn from_matrix(a: &AccuracyMatrix) -> Result<Self> {
        let forget = match forgetting_rate(a) {
            Ok(f) => Some(f),
            Err(Error::Undefined(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            last: last_accuracy(a)?,
            avg: avg_incremental_accuracy(a)?,
            forget,
            per_task: (0..a.tasks())
                .map(|i| a.task_curve(i).into_iter().flatten().collect())
                .collect(),
        })
    }
}
