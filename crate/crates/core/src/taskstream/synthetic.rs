//! Synthetic datasets with a two-level class hierarchy.
//!
//! Superclass centers are drawn around the origin; each class center is its
//! superclass center plus a smaller offset. Classes that share a superclass
//! are therefore close in input space, giving a known ground-truth
//! semantic correlation between classes.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledExample};
use crate::error::{Error, Result};
use crate::numcore::Tensor2D;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticHierarchySpec {
    pub superclasses: usize,
    pub classes_per_superclass: usize,
    pub input_dim: usize,
    pub sigma_super: f64,
    pub sigma_class: f64,
    pub sigma_sample: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl Default for SyntheticHierarchySpec {
    fn default() -> Self {
        Self {
            superclasses: 8,
            classes_per_superclass: 4,
            input_dim: 32,
            sigma_super: 1.0,
            sigma_class: 0.6,
            sigma_sample: 0.5,
            train_per_class: 60,
            test_per_class: 30,
        }
    }
}

impl SyntheticHierarchySpec {
    pub fn validate(&self) -> Result<()> {
        if self.superclasses == 0 || self.classes_per_superclass == 0 || self.input_dim == 0 {
            return Err(Error::InvalidSpec(
                "superclass count, classes per superclass and input dim must be positive".into(),
            ));
        }
        if !(self.sigma_super > 0.0 && self.sigma_class > 0.0) {
            return Err(Error::InvalidSpec(
                "center spreads must be strictly positive".into(),
            ));
        }
        if !(self.sigma_sample >= 0.0 && self.sigma_sample.is_finite()) {
            return Err(Error::InvalidSpec("sample noise must be finite and >= 0".into()));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::InvalidSpec(
                "every class needs train and test samples".into(),
            ));
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.superclasses * self.classes_per_superclass
    }
}

/// Generated dataset plus its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    /// One row per class, in class-id order.
    pub centers: Tensor2D,
    /// Superclass index of each class id.
    pub superclass_of: Vec<usize>,
}

pub fn class_name(superclass: usize, class: usize) -> String {
    format!("super{superclass}_class{class}")
}

/// Recovers `(superclass, class)` from a `super{i}_class{j}` name.
pub fn parse_class_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("super")?;
    let (s, c) = rest.split_once("_class")?;
    Some((s.parse().ok()?, c.parse().ok()?))
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize, sigma: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticHierarchySpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = substream(seed, "data");
    let d = spec.input_dim;
    let mut class_names = Vec::with_capacity(spec.class_count());
    let mut superclass_of = Vec::with_capacity(spec.class_count());
    let mut centers = Vec::with_capacity(spec.class_count());
    for s in 0..spec.superclasses {
        let super_center = gaussian_vec(&mut rng, d, spec.sigma_super);
        for c in 0..spec.classes_per_superclass {
            let offset = gaussian_vec(&mut rng, d, spec.sigma_class);
            centers.push(
                super_center
                    .iter()
                    .zip(&offset)
                    .map(|(a, b)| a + b)
                    .collect::<Vec<f64>>(),
            );
            class_names.push(class_name(s, c));
            superclass_of.push(s);
        }
    }
    let sample = |class_id: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let noise = gaussian_vec(rng, d, spec.sigma_sample);
        LabeledExample {
            features: centers[class_id]
                .iter()
                .zip(&noise)
                .map(|(c, n)| c + n)
                .collect(),
            class_id,
            class_name: class_names[class_id].clone(),
            domain_id: 0,
        }
    };
    let mut train = Vec::with_capacity(spec.class_count() * spec.train_per_class);
    let mut test = Vec::with_capacity(spec.class_count() * spec.test_per_class);
    for class_id in 0..spec.class_count() {
        for _ in 0..spec.train_per_class {
            train.push(sample(class_id, &mut rng));
        }
        for _ in 0..spec.test_per_class {
            test.push(sample(class_id, &mut rng));
        }
    }
    let centers = Tensor2D::from_rows(&centers)?;
    Ok(SyntheticDataset {
        dataset: Dataset {
            input_dim: d,
            class_names,
            train,
            test,
        },
        centers,
        superclass_of,
    })
}

/// Builds `domains` shifted copies of `dataset` for domain-incremental
/// streams. Domain 0 is the original; domain `k > 0` applies a seeded
/// rotation of random coordinate planes by `severity · π/2` followed by a
/// mean shift of length `severity · shift_scale`.
pub fn make_domains(
    dataset: &Dataset,
    domains: usize,
    severity: f64,
    shift_scale: f64,
    seed: u64,
) -> Result<Dataset> {
    if domains == 0 {
        return Err(Error::InvalidSpec("need at least one domain".into()));
    }
    if !(0.0..=1.0).contains(&severity) {
        return Err(Error::InvalidSpec(format!(
            "domain severity must lie in [0, 1], got {severity}"
        )));
    }
    let d = dataset.input_dim;
    let mut rng = substream(seed, "domains");
    let mut out = Dataset {
        input_dim: d,
        class_names: dataset.class_names.clone(),
        train: Vec::new(),
        test: Vec::new(),
    };
    for domain in 0..domains {
        let (rotation, shift) = if domain == 0 {
            (DMatrix::<f64>::identity(d, d), vec![0.0; d])
        } else {
            let rotation = plane_rotation(&mut rng, d, severity * std::f64::consts::FRAC_PI_2);
            let mut dir = gaussian_vec(&mut rng, d, 1.0);
            let norm = crate::numcore::l2_norm(&dir).max(f64::MIN_POSITIVE);
            dir.iter_mut()
                .for_each(|v| *v *= severity * shift_scale / norm);
            (rotation, dir)
        };
        let transform = |e: &LabeledExample| {
            let x = nalgebra::DVector::from_column_slice(&e.features);
            let y = &rotation * x;
            LabeledExample {
                features: y.iter().zip(&shift).map(|(a, b)| a + b).collect(),
                class_id: e.class_id,
                class_name: e.class_name.clone(),
                domain_id: domain,
            }
        };
        out.train.extend(dataset.train.iter().map(transform));
        out.test.extend(dataset.test.iter().map(transform));
    }
    Ok(out)
}

/// Orthogonal matrix rotating disjoint random coordinate pairs by `angle`.
fn plane_rotation<R: Rng + ?Sized>(rng: &mut R, d: usize, angle: f64) -> DMatrix<f64> {
    let mut axes: Vec<usize> = (0..d).collect();
    axes.shuffle(rng);
    let mut m = DMatrix::<f64>::identity(d, d);
    let (s, c) = angle.sin_cos();
    for pair in axes.chunks_exact(2) {
        let (i, j) = (pair[0], pair[1]);
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(i, j)] = -s;
        m[(j, i)] = s;
    }
    m
}
