use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::targets::{normalize, SemanticTargetTable};
use crate::error::{Error, Result};
use crate::numcore::{dot, l2_norm, Tensor2D};
use crate::rng::sha256_hex;
use crate::taskstream::TaskSpec;

/// How classifier rows are produced and whether training may touch them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Rows drawn from N(0, I) and trained with the encoder.
    RandomTrainable,
    /// Rows are semantic targets, never updated.
    SemanticFrozen,
    /// Rows start as semantic targets and are trained like `RandomTrainable`.
    SemanticUpdated,
    /// Semantic targets after Gram–Schmidt, never updated.
    OrthogonalFrozen,
    /// Rows taken from a jointly trained oracle model, never updated.
    OracleFrozen,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::RandomTrainable,
        Regime::SemanticFrozen,
        Regime::SemanticUpdated,
        Regime::OrthogonalFrozen,
        Regime::OracleFrozen,
    ];

    pub fn is_frozen(self) -> bool {
        matches!(
            self,
            Regime::SemanticFrozen | Regime::OrthogonalFrozen | Regime::OracleFrozen
        )
    }

    /// Whether the regime reads rows from a semantic target table.
    pub fn uses_targets(self) -> bool {
        matches!(
            self,
            Regime::SemanticFrozen | Regime::SemanticUpdated | Regime::OrthogonalFrozen
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::RandomTrainable => "random_trainable",
            Regime::SemanticFrozen => "semantic_frozen",
            Regime::SemanticUpdated => "semantic_updated",
            Regime::OrthogonalFrozen => "orthogonal_frozen",
            Regime::OracleFrozen => "oracle_frozen",
        }
    }
}

/// Classes covered by one head block.
#[derive(Debug, Clone, Copy)]
pub struct BlockClasses<'a> {
    pub task_index: usize,
    pub class_ids: &'a [usize],
    pub class_names: &'a [String],
}

impl<'a> From<&'a TaskSpec> for BlockClasses<'a> {
    fn from(task: &'a TaskSpec) -> Self {
        Self {
            task_index: task.index,
            class_ids: &task.class_ids,
            class_names: &task.class_names,
        }
    }
}

/// Weight block `W_t` (one row per class of task `t`, in task class order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadBlock {
    task_index: usize,
    class_ids: Vec<usize>,
    class_names: Vec<String>,
    weights: Tensor2D,
}

impl HeadBlock {
    fn new(classes: BlockClasses<'_>, weights: Tensor2D) -> Result<Self> {
        if classes.class_ids.len() != classes.class_names.len() {
            return Err(Error::Shape("class ids and names differ in length".into()));
        }
        if weights.rows() != classes.class_ids.len() {
            return Err(Error::Shape(format!(
                "{} weight rows for {} classes",
                weights.rows(),
                classes.class_ids.len()
            )));
        }
        Ok(Self {
            task_index: classes.task_index,
            class_ids: classes.class_ids.to_vec(),
            class_names: classes.class_names.to_vec(),
            weights,
        })
    }

    pub fn task_index(&self) -> usize {
        self.task_index
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn weights(&self) -> &Tensor2D {
        &self.weights
    }

    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(self.weights.data().len() * 8);
        for v in self.weights.data() {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        for name in &self.class_names {
            bytes.extend_from_slice(name.as_bytes());
            bytes.push(0);
        }
        sha256_hex(&bytes)
    }
}

/// Ordered per-task weight blocks sharing one supervision regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    regime: Regime,
    blocks: Vec<HeadBlock>,
}

impl ClassifierHead {
    pub fn empty(regime: Regime) -> Self {
        Self {
            regime,
            blocks: Vec::new(),
        }
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn is_frozen(&self) -> bool {
        self.regime.is_frozen()
    }

    pub fn blocks(&self) -> &[HeadBlock] {
        &self.blocks
    }

    pub fn dim(&self) -> Option<usize> {
        self.blocks.first().map(|b| b.weights.cols())
    }

    pub fn class_count(&self) -> usize {
        self.blocks.iter().map(|b| b.class_ids.len()).sum()
    }

    /// Appends the blocks of `other`, which must share regime and width.
    pub fn extend(&mut self, other: ClassifierHead) -> Result<()> {
        if other.regime != self.regime {
            return Err(Error::Config(format!(
                "cannot mix {} blocks into a {} head",
                other.regime.as_str(),
                self.regime.as_str()
            )));
        }
        if let (Some(a), Some(b)) = (self.dim(), other.dim()) {
            if a != b {
                return Err(Error::Shape(format!("head width {a} vs block width {b}")));
            }
        }
        self.blocks.extend(other.blocks);
        Ok(())
    }

    /// Index of the block holding `class_id`, first match.
    pub fn block_of_class(&self, class_id: usize) -> Option<usize> {
        self.blocks
            .iter()
            .position(|b| b.class_ids.contains(&class_id))
    }

    pub fn block_for_task(&self, task_index: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.task_index == task_index)
    }

    /// Mutable weights of block `i`; `None` for frozen regimes.
    pub fn trainable_weights_mut(&mut self, i: usize) -> Option<&mut Tensor2D> {
        if self.regime.is_frozen() {
            return None;
        }
        self.blocks.get_mut(i).map(|b| &mut b.weights)
    }

    /// Rows of the selected blocks stacked in the given order, with the
    /// matching class ids.
    pub fn stacked(&self, block_indices: &[usize]) -> Result<(Tensor2D, Vec<usize>)> {
        let parts: Vec<&Tensor2D> = block_indices.iter().map(|&i| &self.blocks[i].weights).collect();
        let ids = block_indices
            .iter()
            .flat_map(|&i| self.blocks[i].class_ids.iter().copied())
            .collect();
        Ok((Tensor2D::vstack(&parts)?, ids))
    }

    pub fn fingerprint(&self) -> String {
        let joined: String = self.blocks.iter().map(HeadBlock::fingerprint).collect();
        sha256_hex(format!("{}:{joined}", self.regime.as_str()).as_bytes())
    }

    pub fn block_fingerprints(&self) -> Vec<String> {
        self.blocks.iter().map(HeadBlock::fingerprint).collect()
    }
}

/// Trainable head with i.i.d. standard normal entries.
pub fn build_random_head<R: Rng + ?Sized>(
    classes: BlockClasses<'_>,
    d: usize,
    rng: &mut R,
) -> Result<ClassifierHead> {
    if d == 0 {
        return Err(Error::Shape("head width must be positive".into()));
    }
    let n = classes.class_ids.len();
    let data = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    let block = HeadBlock::new(classes, Tensor2D::from_vec(n, d, data)?)?;
    Ok(ClassifierHead {
        regime: Regime::RandomTrainable,
        blocks: vec![block],
    })
}

/// Head whose rows are the table's targets for the task classes.
pub fn build_semantic_head(
    classes: BlockClasses<'_>,
    table: &SemanticTargetTable,
    frozen: bool,
) -> Result<ClassifierHead> {
    let regime = if frozen {
        Regime::SemanticFrozen
    } else {
        Regime::SemanticUpdated
    };
    build_table_head(classes, table, regime)
}

/// Head built from table rows under any regime (orthogonal and oracle
/// targets are stored as tables too).
pub fn build_table_head(
    classes: BlockClasses<'_>,
    table: &SemanticTargetTable,
    regime: Regime,
) -> Result<ClassifierHead> {
    let rows = table.lookup(classes.class_names)?;
    let block = HeadBlock::new(classes, Tensor2D::from_rows(&rows)?)?;
    Ok(ClassifierHead {
        regime,
        blocks: vec![block],
    })
}

/// Orthonormalizes `rows` by Gram–Schmidt in the given order. A row that is
/// linearly dependent on its predecessors is replaced by a seeded random
/// vector before orthogonalization.
pub fn orthogonalize<R: Rng + ?Sized>(rows: &[Vec<f64>], rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let Some(d) = rows.first().map(Vec::len) else {
        return Ok(Vec::new());
    };
    if rows.len() > d {
        return Err(Error::Rank(format!(
            "{} classes cannot be orthogonal in {d} dimensions",
            rows.len()
        )));
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Shape(format!("row {i} has width {}, expected {d}", row.len())));
        }
        let scale = l2_norm(row);
        let mut candidate = row.clone();
        let mut attempts = 0;
        loop {
            let mut v = candidate.clone();
            // two passes keep the result orthogonal to machine precision
            for _ in 0..2 {
                for q in &out {
                    let p = dot(&v, q);
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
                }
            }
            let residual = l2_norm(&v);
            let reference = if attempts == 0 { scale } else { l2_norm(&candidate) };
            if residual > 1e-10 * reference.max(f64::MIN_POSITIVE) && residual > 0.0 {
                normalize(&mut v)?;
                out.push(v);
                break;
            }
            attempts += 1;
            if attempts == 1 {
                log::warn!("target row {i} is linearly dependent on earlier rows; using a random completion");
            }
            if attempts > 100 {
                return Err(Error::Rank(format!("could not complete basis at row {i}")));
            }
            candidate = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        }
    }
    Ok(out)
}

/// Orthogonalizes a table's rows in `order` (class names) and returns a new
/// table with the same names.
pub fn orthogonal_table<R: Rng + ?Sized>(
    table: &SemanticTargetTable,
    order: &[String],
    rng: &mut R,
) -> Result<SemanticTargetTable> {
    let rows = table.lookup(order)?;
    let ortho = orthogonalize(&rows, rng)?;
    let mut out = SemanticTargetTable::new(table.dim());
    for (name, row) in order.iter().zip(ortho) {
        out.insert(name, row)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::supervision::targets::{fallback_targets, FallbackSource};

    fn classes<'a>(ids: &'a [usize], names: &'a [String]) -> BlockClasses<'a> {
        BlockClasses {
            task_index: 0,
            class_ids: ids,
            class_names: names,
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("super{}_class{}", i / 2, i % 2)).collect()
    }

    #[test]
    fn random_head_is_seeded() {
        let ids: Vec<usize> = (0..4).collect();
        let n = names(4);
        let a = build_random_head(classes(&ids, &n), 8, &mut substream(1, "h")).unwrap();
        let b = build_random_head(classes(&ids, &n), 8, &mut substream(1, "h")).unwrap();
        let c = build_random_head(classes(&ids, &n), 8, &mut substream(2, "h")).unwrap();
        assert_eq!(a, b);
        let max_diff = a.blocks()[0]
            .weights()
            .data()
            .iter()
            .zip(c.blocks()[0].weights().data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 0.0);
        assert_eq!(a.regime(), Regime::RandomTrainable);
    }

    #[test]
    fn random_head_moments() {
        let ids: Vec<usize> = (0..100).collect();
        let n: Vec<String> = (0..100).map(|i| i.to_string()).collect();
        let h = build_random_head(classes(&ids, &n), 100, &mut substream(0, "moments")).unwrap();
        let data = h.blocks()[0].weights().data();
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / data.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn semantic_rows_copy_table_bits() {
        let n = names(4);
        let t = fallback_targets(FallbackSource::Hash { names: &n }, 6, 0).unwrap();
        let ids = [3usize, 1];
        let task_names = vec![n[3].clone(), n[1].clone()];
        let h = build_semantic_head(classes(&ids, &task_names), &t, true).unwrap();
        assert_eq!(h.blocks()[0].weights().row(0), t.get("super1_class1").unwrap());
        assert_eq!(h.blocks()[0].weights().row(1), t.get("super0_class1").unwrap());
        assert_eq!(h.regime(), Regime::SemanticFrozen);
        let mut h = h;
        assert!(h.trainable_weights_mut(0).is_none());
    }

    #[test]
    fn missing_target_is_lookup_error() {
        let n = names(2);
        let t = fallback_targets(FallbackSource::Hash { names: &n }, 4, 0).unwrap();
        let ids = [0usize, 1, 2];
        let wanted = vec![n[0].clone(), "ghost".into(), "phantom".into()];
        match build_semantic_head(classes(&ids, &wanted), &t, false) {
            Err(Error::MissingTargets(m)) => assert_eq!(m, vec!["ghost", "phantom"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn orthonormal_input_kept_up_to_sign() {
        let rows = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]];
        let out = orthogonalize(&rows, &mut substream(0, "o")).unwrap();
        for (a, b) in rows.iter().zip(&out) {
            assert!((dot(a, b).abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn correlated_pair_becomes_identity_gram() {
        let a = vec![1.0, 0.0, 0.0];
        let b = vec![0.8, 0.6, 0.0];
        let out = orthogonalize(&[a, b], &mut substream(0, "o")).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&out[i], &out[j]) - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_and_dependence() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(
            orthogonalize(&rows, &mut substream(0, "o")),
            Err(Error::Rank(_))
        ));
        let dependent = vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0]];
        let out = orthogonalize(&dependent, &mut substream(0, "o")).unwrap();
        assert!(dot(&out[0], &out[1]).abs() < 1e-12);
        assert!((l2_norm(&out[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extend_checks_regime() {
        let n = names(2);
        let t = fallback_targets(FallbackSource::Hash { names: &n }, 4, 0).unwrap();
        let ids = [0usize, 1];
        let mut h = build_semantic_head(classes(&ids, &n), &t, true).unwrap();
        let other = build_semantic_head(classes(&ids, &n), &t, false).unwrap();
        assert!(h.extend(other).is_err());
    }
}
