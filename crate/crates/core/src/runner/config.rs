use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clmethods::TrainRunConfig;
use crate::error::{Error, Result};
use crate::numcore::Objective;
use crate::rng::sha256_hex;
use crate::supervision::{OracleConfig, Regime};
use crate::taskstream::{load_dataset_pair, Dataset, Protocol, ProtocolConfig, SyntheticHierarchySpec};

/// One experiment: a regime and method set evaluated over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label used in manifests and comparison tables.
    pub name: String,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub regime: Regime,
    pub protocol: ProtocolConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub embeddings: EmbeddingsConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainRunConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Used only by the `oracle_frozen` regime.
    #[serde(default)]
    pub oracle: OracleConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Either a synthetic hierarchy or a train/test file pair, optionally
/// expanded into shifted domains.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub synthetic: Option<SyntheticHierarchySpec>,
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub domains: Option<DomainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub count: usize,
    pub severity: f64,
    #[serde(default = "default_shift")]
    pub shift_scale: f64,
}

fn default_shift() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackMode {
    Hierarchy,
    Hash,
}

/// Source of semantic targets: an embeddings file or a built-in fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingsConfig {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub fallback: Option<FallbackMode>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Seed of the fallback generator; fixed across run seeds so every seed
    /// sees the same targets.
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.5
}

impl Default for EmbeddingsConfig {
    fn default() -> Self {
        Self {
            file: None,
            fallback: Some(FallbackMode::Hierarchy),
            alpha: default_alpha(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            dim: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    #[serde(default = "yes")]
    pub drift: bool,
    #[serde(default = "default_k")]
    pub drift_k: usize,
    #[serde(default = "yes")]
    pub drift_centered: bool,
    #[serde(default = "yes")]
    pub correlation: bool,
    #[serde(default = "default_corr_classes")]
    pub correlation_classes: usize,
}

fn yes() -> bool {
    true
}

fn default_k() -> usize {
    10
}

fn default_corr_classes() -> usize {
    18
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            drift: true,
            drift_k: default_k(),
            drift_centered: true,
            correlation: true,
            correlation_classes: default_corr_classes(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file. Relative data, embeddings and output paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.data.train);
        fix(&mut self.data.test);
        fix(&mut self.embeddings.file);
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without loading data files.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        match (&self.data.synthetic, &self.data.train, &self.data.test) {
            (Some(spec), None, None) => spec.validate()?,
            (None, Some(_), Some(_)) => {}
            _ => {
                return Err(Error::Config(
                    "data needs either [data.synthetic] or both train and test paths".into(),
                ))
            }
        }
        match (self.protocol.kind, &self.data.domains) {
            (Protocol::DomainIl, None) => {
                return Err(Error::Config("domain_il needs [data.domains]".into()))
            }
            (Protocol::DomainIl, Some(d)) if d.count == 0 => {
                return Err(Error::Config("domain count must be positive".into()))
            }
            (Protocol::DomainIl, Some(_)) => {}
            (_, Some(_)) => {
                return Err(Error::Config(
                    "[data.domains] only applies to domain_il".into(),
                ))
            }
            (_, None) => {}
        }
        if self.regime.uses_targets() {
            match (&self.embeddings.file, self.embeddings.fallback) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(Error::Config(
                        "embeddings need exactly one of file or fallback".into(),
                    ))
                }
            }
        }
        if self.model.dim == 0 {
            return Err(Error::Config("model dim must be positive".into()));
        }
        if self.analysis.drift && self.analysis.drift_k == 0 {
            return Err(Error::Config("drift_k must be positive".into()));
        }
        if self.regime == Regime::OracleFrozen && self.oracle.dim != self.model.dim {
            return Err(Error::Config(format!(
                "oracle dim {} differs from model dim {}",
                self.oracle.dim, self.model.dim
            )));
        }
        self.training.validate()
    }

    /// Hash of every field that affects results. Name, seeds and output
    /// directory are excluded; JSON object keys are sorted, so the value does
    /// not depend on field order in the config file.
    pub fn fingerprint(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.name = String::new();
        canonical.seeds = Vec::new();
        canonical.output_dir = PathBuf::new();
        let value = serde_json::to_value(&canonical)?;
        Ok(sha256_hex(serde_json::to_string(&value)?.as_bytes())[..16].to_string())
    }

    /// Hash of the protocol and data only: records with equal protocol
    /// fingerprints evaluate the same streams.
    pub fn protocol_fingerprint(&self) -> Result<String> {
        let value = serde_json::to_value((&self.protocol, &self.data))?;
        Ok(sha256_hex(serde_json::to_string(&value)?.as_bytes())[..16].to_string())
    }

    pub fn objective(&self) -> Objective {
        self.training.objective
    }

    /// Class count without generating or fully validating the stream.
    pub fn class_total(&self) -> Result<usize> {
        match &self.data.synthetic {
            Some(spec) => Ok(spec.class_count()),
            None => Ok(self.load_files()?.class_count()),
        }
    }

    pub(crate) fn load_files(&self) -> Result<Dataset> {
        match (&self.data.train, &self.data.test) {
            (Some(train), Some(test)) => load_dataset_pair(train, test),
            _ => Err(Error::Config("no dataset files configured".into())),
        }
    }
}
