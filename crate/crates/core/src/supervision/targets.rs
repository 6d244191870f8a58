//! Semantic target tables: one unit-norm vector per class name.
//!
//! File format:
//!
//! ```text
//! dim <d>
//! <class_name>\t<v1> <v2> ... <v_d>
//! ```
//!
//! Names may contain spaces; the tab is the only name/vector separator.
//! Vectors may have any norm and are normalized on load.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::l2_norm;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticTargetTable {
    dim: usize,
    names: Vec<String>,
    vectors: Vec<Vec<f64>>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Scales `v` to unit L2 norm. Vectors already unit-norm to within a few
/// ulps are left untouched so that save/load is bit-exact.
pub(crate) fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = l2_norm(v);
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::Degenerate(format!("cannot normalize vector of norm {norm}")));
    }
    if (norm - 1.0).abs() > 4.0 * f64::EPSILON {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(())
}

impl SemanticTargetTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            names: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Adds `name`, normalizing `vector`.
    pub fn insert(&mut self, name: &str, mut vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "target for {name:?} has {} values, table dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("target for {name:?} is not finite")));
        }
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate class name {name:?}")));
        }
        normalize(&mut vector)?;
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.vectors.push(vector);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.index.get(name).map(|&i| &self.vectors[i][..])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names
            .iter()
            .zip(&self.vectors)
            .map(|(n, v)| (n.as_str(), v.as_slice()))
    }

    /// Rows for `names` in the given order, or the full list of missing names.
    pub fn lookup(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| !self.index.contains_key(n.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingTargets(missing));
        }
        Ok(names
            .iter()
            .map(|n| self.get(n).expect("checked").to_vec())
            .collect())
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
    }

    pub fn parse(text: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse { line, msg };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty embeddings file".into()))?;
        let dim = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["dim", d] => d
                .parse::<usize>()
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| parse_err(1, format!("bad dim {d:?}")))?,
            _ => return Err(parse_err(1, "expected header `dim <d>`".into())),
        };
        let mut table = Self::new(dim);
        for (i, line) in lines {
            let lineno = i + 1;
            let (name, values) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(lineno, "missing tab separator".into()))?;
            if name.is_empty() {
                return Err(parse_err(lineno, "empty class name".into()));
            }
            let vector = values
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| parse_err(lineno, format!("non-finite or malformed value {v:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vector.len() != dim {
                return Err(parse_err(
                    lineno,
                    format!("{} values, header declares dim {dim}", vector.len()),
                ));
            }
            if table.index.contains_key(name) {
                return Err(parse_err(lineno, format!("duplicate class name {name:?}")));
            }
            table
                .insert(name, vector)
                .map_err(|e| parse_err(lineno, e.to_string()))?;
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("dim {}\n", self.dim);
        for (name, v) in self.iter() {
            out.push_str(name);
            out.push('\t');
            out.push_str(
                &v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Restores the lookup index after deserializing through serde.
    pub fn reindexed(mut self) -> Self {
        self.rebuild_index();
        self
    }
}

pub fn load_targets(path: &Path) -> Result<SemanticTargetTable> {
    SemanticTargetTable::parse(&std::fs::read_to_string(path)?)
}

/// Where fallback targets get their structure from.
#[derive(Debug, Clone, PartialEq)]
pub enum FallbackSource<'a> {
    /// Ground-truth hierarchy: `superclass_of[i]` for `names[i]`.
    /// Targets are `normalize(super_dir + alpha · class_dir)`.
    Hierarchy {
        names: &'a [String],
        superclass_of: &'a [usize],
        alpha: f64,
    },
    /// A deterministic unit vector per name, seeded by a hash of the name.
    Hash { names: &'a [String] },
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if normalize(&mut v).is_ok() {
            return v;
        }
    }
}

/// Semantic targets built without a language model, so experiments can run
/// with known ground-truth class correlations.
pub fn fallback_targets(source: FallbackSource<'_>, d: usize, seed: u64) -> Result<SemanticTargetTable> {
    if d == 0 {
        return Err(Error::Shape("target dim must be positive".into()));
    }
    let mut table = SemanticTargetTable::new(d);
    match source {
        FallbackSource::Hierarchy {
            names,
            superclass_of,
            alpha,
        } => {
            if names.len() != superclass_of.len() {
                return Err(Error::Shape(format!(
                    "{} names but {} superclass labels",
                    names.len(),
                    superclass_of.len()
                )));
            }
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
            }
            let supers = superclass_of.iter().copied().max().map_or(0, |m| m + 1);
            if alpha == 0.0 && supers < names.len() {
                log::warn!("alpha = 0 maps every class of a superclass to one target");
                return Err(Error::Degenerate(
                    "alpha = 0 gives identical targets to distinct classes of a superclass".into(),
                ));
            }
            let mut rng = substream(seed, "targets/super");
            let super_dirs: Vec<Vec<f64>> = (0..supers).map(|_| random_unit(&mut rng, d)).collect();
            let mut rng = substream(seed, "targets/class");
            for (name, &s) in names.iter().zip(superclass_of) {
                let class_dir = random_unit(&mut rng, d);
                let v = super_dirs[s]
                    .iter()
                    .zip(&class_dir)
                    .map(|(a, b)| a + alpha * b)
                    .collect();
                table.insert(name, v)?;
            }
        }
        FallbackSource::Hash { names } => {
            for name in names {
                let mut rng = substream(seed, &format!("targets/hash/{name}"));
                table.insert(name, random_unit(&mut rng, d))?;
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{cosine, dot};

    #[test]
    fn normalizes_on_load() {
        let t = SemanticTargetTable::parse("dim 2\nred fox\t3 4\n").unwrap();
        assert_eq!(t.get("red fox").unwrap(), &[0.6, 0.8]);
    }

    #[test]
    fn duplicate_reported_at_second_line() {
        let err = SemanticTargetTable::parse("dim 2\ncat\t1 0\ndog\t0 1\ncat\t1 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn dim_mismatch_and_nonfinite() {
        assert!(matches!(
            SemanticTargetTable::parse("dim 3\ncat\t1 0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            SemanticTargetTable::parse("dim 2\ncat\t1 inf\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(SemanticTargetTable::parse("dim 2\ncat\t0 0\n").is_err());
    }

    #[test]
    fn lookup_lists_every_missing_name() {
        let t = SemanticTargetTable::parse("dim 2\ncat\t1 0\n").unwrap();
        let err = t
            .lookup(&["dog".into(), "cat".into(), "owl".into()])
            .unwrap_err();
        match err {
            Error::MissingTargets(m) => assert_eq!(m, vec!["dog", "owl"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn text_roundtrip_is_bit_exact() {
        let names: Vec<String> = (0..6).map(|i| format!("class {i}")).collect();
        let t = fallback_targets(FallbackSource::Hash { names: &names }, 7, 3).unwrap();
        let back = SemanticTargetTable::parse(&t.to_text()).unwrap();
        for ((_, a), (_, b)) in t.iter().zip(back.iter()) {
            let ab: Vec<u64> = a.iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u64> = b.iter().map(|x| x.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn hash_mode_is_per_name() {
        let names = vec!["cat".to_string()];
        let a = fallback_targets(FallbackSource::Hash { names: &names }, 5, 0).unwrap();
        let b = fallback_targets(FallbackSource::Hash { names: &names }, 5, 0).unwrap();
        assert_eq!(a.get("cat"), b.get("cat"));
        assert!((dot(a.get("cat").unwrap(), a.get("cat").unwrap()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hierarchy_within_beats_cross() {
        let names: Vec<String> = ["a0", "a1", "b0", "b1"].iter().map(|s| s.to_string()).collect();
        let supers = [0, 0, 1, 1];
        let t = fallback_targets(
            FallbackSource::Hierarchy {
                names: &names,
                superclass_of: &supers,
                alpha: 0.5,
            },
            32,
            0,
        )
        .unwrap();
        let c = |a: &str, b: &str| cosine(t.get(a).unwrap(), t.get(b).unwrap()).unwrap();
        let within = [c("a0", "a1"), c("b0", "b1")];
        let cross = [c("a0", "b0"), c("a0", "b1"), c("a1", "b0"), c("a1", "b1")];
        let min_within = within.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_cross = cross.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min_within > max_cross, "{within:?} vs {cross:?}");
    }

    #[test]
    fn zero_alpha_rejected_for_shared_superclass() {
        let names: Vec<String> = ["a0", "a1"].iter().map(|s| s.to_string()).collect();
        let r = fallback_targets(
            FallbackSource::Hierarchy {
                names: &names,
                superclass_of: &[0, 0],
                alpha: 0.0,
            },
            4,
            0,
        );
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }
}
