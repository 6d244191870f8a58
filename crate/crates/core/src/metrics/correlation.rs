use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{cosine, Tensor2D};

/// Pairwise cosine similarity between class-mean features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub class_ids: Vec<usize>,
    pub class_names: Vec<String>,
    /// Symmetric, unit diagonal.
    pub matrix: Tensor2D,
}

impl CorrelationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, name) in self.class_names.iter().enumerate() {
            out.push_str(name);
            for v in self.matrix.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Mean off-diagonal correlation for pairs where `same(i, j)` holds, minus
    /// the mean over pairs where it does not. Indices are positions in the
    /// report, not class ids.
    pub fn group_gap(&self, group: impl Fn(usize) -> usize) -> Result<f64> {
        let n = self.class_ids.len();
        let (mut within, mut nw, mut across, mut na) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..n {
            for j in i + 1..n {
                let v = self.matrix.get(i, j);
                if group(i) == group(j) {
                    within += v;
                    nw += 1;
                } else {
                    across += v;
                    na += 1;
                }
            }
        }
        if nw == 0 || na == 0 {
            return Err(Error::Undefined(
                "gap needs pairs both within and across groups".into(),
            ));
        }
        Ok(within / nw as f64 - across / na as f64)
    }
}

/// Correlation of class-mean features for the listed classes. `features`
/// rows align with `labels`.
pub fn interclass_correlation(
    features: &Tensor2D,
    labels: &[usize],
    classes: &[(usize, String)],
) -> Result<CorrelationReport> {
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let d = features.cols();
    let mut means = Vec::with_capacity(classes.len());
    for (id, name) in classes {
        let mut sum = vec![0.0; d];
        let mut count = 0usize;
        for (row, _) in features.row_iter().zip(labels).filter(|(_, l)| *l == id) {
            sum.iter_mut().zip(row).for_each(|(s, x)| *s += x);
            count += 1;
        }
        if count < 2 {
            return Err(Error::Empty(format!(
                "class {name} needs at least two examples, found {count}"
            )));
        }
        sum.iter_mut().for_each(|s| *s /= count as f64);
        means.push(sum);
    }
    let n = classes.len();
    let mut matrix = Tensor2D::zeros(n, n);
    for i in 0..n {
        matrix.set(i, i, 1.0);
        for j in i + 1..n {
            let c = cosine(&means[i], &means[j]).ok_or_else(|| {
                Error::Degenerate(format!("class mean of {} or {} is zero", classes[i].1, classes[j].1))
            })?;
            matrix.set(i, j, c);
            matrix.set(j, i, c);
        }
    }
    Ok(CorrelationReport {
        class_ids: classes.iter().map(|(id, _)| *id).collect(),
        class_names: classes.iter().map(|(_, n)| n.clone()).collect(),
        matrix,
    })
}
