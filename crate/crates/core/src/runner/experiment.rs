use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FallbackMode};
use super::io::{read_json, write_atomic, write_json};
use crate::clmethods::{Learner, Method, TaskLog};
use crate::error::{Error, Result};
use crate::metrics::{
    drift_csv, interclass_correlation, repre_drift, AccuracyMatrix, CorrelationReport, DriftPoint,
    MetricSummary,
};
use crate::numcore::{EncoderModel, Tensor2D};
use crate::rng::substream;
use crate::supervision::{
    build_oracle_head, build_random_head, build_table_head, fallback_targets, load_targets,
    orthogonal_table, BlockClasses, ClassifierHead, FallbackSource, Regime, SemanticTargetTable,
};
use crate::taskstream::synthetic::parse_class_name;
use crate::taskstream::{generate_synthetic, make_domains, split_protocol, Dataset, Protocol, TaskStream};

pub const FRAMEWORK_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Task-0 test features captured after every task, kept so drift can be
/// recomputed for other `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftFeatures {
    pub snapshots: Vec<Tensor2D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSeries {
    pub k: usize,
    pub centered: bool,
    pub points: Vec<DriftPoint>,
}

impl DriftSeries {
    /// Drift of the first snapshot against each later one.
    pub fn from_features(features: &DriftFeatures, k: usize, centered: bool) -> Result<Self> {
        let reference = features
            .snapshots
            .first()
            .ok_or_else(|| Error::Empty("no drift snapshots".into()))?;
        let points = features.snapshots[1..]
            .iter()
            .enumerate()
            .map(|(j, f)| {
                Ok(DriftPoint {
                    task: 0,
                    after: j + 1,
                    drift: repre_drift(reference, f, k, centered)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { k, centered, points })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub report: CorrelationReport,
    /// Mean within-superclass minus mean cross-superclass correlation, when
    /// class names carry a hierarchy.
    pub superclass_gap: Option<f64>,
}

/// Fingerprint of one frozen block at construction and after the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockHash {
    pub task_index: usize,
    pub initial: String,
    pub last: String,
}

/// Everything one seed produces, excluding wall-clock time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub fingerprint: String,
    pub accuracy: AccuracyMatrix,
    pub summary: MetricSummary,
    pub drift: Option<DriftSeries>,
    pub correlation: Option<CorrelationResult>,
    pub task_logs: Vec<TaskLog>,
    pub frozen_blocks: Vec<BlockHash>,
    /// Number of training examples per task.
    pub train_sizes: Vec<usize>,
    pub buffer_size: usize,
}

impl SeedResult {
    /// True when every frozen block kept its construction-time bytes.
    pub fn frozen_intact(&self) -> bool {
        self.frozen_blocks.iter().all(|b| b.initial == b.last)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SeedOutcome {
    Completed(Box<SeedResult>),
    Failed { seed: u64, kind: String, message: String },
}

impl SeedOutcome {
    pub fn seed(&self) -> u64 {
        match self {
            SeedOutcome::Completed(r) => r.seed,
            SeedOutcome::Failed { seed, .. } => *seed,
        }
    }

    pub fn result(&self) -> Option<&SeedResult> {
        match self {
            SeedOutcome::Completed(r) => Some(r),
            SeedOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub fingerprint: String,
    pub protocol_fingerprint: String,
    pub framework_version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedOutcome>,
    /// Choices that depart from the textbook form of a method.
    pub deviations: Vec<String>,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn completed(&self) -> impl Iterator<Item = &SeedResult> {
        self.seeds.iter().filter_map(SeedOutcome::result)
    }

    pub fn failures(&self) -> usize {
        self.seeds.iter().filter(|s| s.result().is_none()).count()
    }

    /// Directory holding this record's per-seed outputs.
    pub fn run_dir(&self) -> PathBuf {
        self.config.output_dir.join(&self.fingerprint)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for seeds; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Skip persistence entirely.
    pub in_memory: bool,
}

/// Deviations that apply to `config`, in a fixed order.
pub fn deviations(config: &ExperimentConfig) -> Vec<String> {
    let mut out = Vec::new();
    if config.training.uses(Method::GradProject) {
        out.push("gradient projection uses a single averaged replay constraint".to_string());
    }
    if config.training.uses(Method::Ewc) {
        out.push(
            "ewc penalty applied as a proximal step; fisher from per-example squared gradients"
                .to_string(),
        );
    }
    if config.regime == Regime::OracleFrozen {
        out.push("oracle head transplanted as-is (rows normalized) and frozen".to_string());
    }
    if config.analysis.drift && config.analysis.drift_centered {
        out.push("features centered before drift PCA".to_string());
    }
    out
}

/// Builds the dataset for one seed.
pub fn build_dataset(config: &ExperimentConfig, seed: u64) -> Result<(Dataset, Option<Vec<usize>>)> {
    let (base, superclass_of) = match &config.data.synthetic {
        Some(spec) => {
            let s = generate_synthetic(spec, seed)?;
            (s.dataset, Some(s.superclass_of))
        }
        None => {
            let d = config.load_files()?;
            let supers = d
                .class_names
                .iter()
                .map(|n| parse_class_name(n).map(|(s, _)| s))
                .collect::<Option<Vec<_>>>();
            (d, supers)
        }
    };
    let dataset = match (&config.data.domains, config.protocol.kind) {
        (Some(dom), Protocol::DomainIl) => {
            make_domains(&base, dom.count, dom.severity, dom.shift_scale, seed)?
        }
        _ => base,
    };
    Ok((dataset, superclass_of))
}

/// Semantic target table for the configured embeddings source.
pub fn build_targets(
    config: &ExperimentConfig,
    dataset: &Dataset,
    superclass_of: Option<&[usize]>,
) -> Result<SemanticTargetTable> {
    let e = &config.embeddings;
    let table = match (&e.file, e.fallback) {
        (Some(path), _) => load_targets(path)?,
        (None, Some(FallbackMode::Hierarchy)) => {
            let supers = superclass_of.ok_or_else(|| {
                Error::Config("hierarchy fallback needs superclass labels".into())
            })?;
            fallback_targets(
                FallbackSource::Hierarchy {
                    names: &dataset.class_names,
                    superclass_of: supers,
                    alpha: e.alpha,
                },
                config.model.dim,
                e.seed,
            )?
        }
        (None, Some(FallbackMode::Hash)) => fallback_targets(
            FallbackSource::Hash {
                names: &dataset.class_names,
            },
            config.model.dim,
            e.seed,
        )?,
        (None, None) => return Err(Error::Config("no embeddings source".into())),
    };
    if table.dim() != config.model.dim {
        return Err(Error::Config(format!(
            "embeddings have dim {} but the model outputs {}",
            table.dim(),
            config.model.dim
        )));
    }
    table.lookup(&dataset.class_names)?;
    Ok(table)
}

/// Produces head blocks for each task under the configured regime.
struct HeadFactory {
    regime: Regime,
    dim: usize,
    table: Option<SemanticTargetTable>,
    rng: rand_chacha::ChaCha8Rng,
}

impl HeadFactory {
    fn new(config: &ExperimentConfig, dataset: &Dataset, superclass_of: Option<&[usize]>, stream: &TaskStream, seed: u64) -> Result<Self> {
        let table = match config.regime {
            Regime::RandomTrainable => None,
            Regime::SemanticFrozen | Regime::SemanticUpdated => {
                Some(build_targets(config, dataset, superclass_of)?)
            }
            Regime::OrthogonalFrozen => {
                let base = build_targets(config, dataset, superclass_of)?;
                let mut rng = substream(seed, "targets/orthogonal");
                Some(orthogonal_table(&base, &stream.class_names, &mut rng)?)
            }
            Regime::OracleFrozen => {
                let oracle_data = Dataset {
                    input_dim: dataset.input_dim,
                    class_names: dataset.class_names.clone(),
                    train: dataset.train.clone(),
                    test: Vec::new(),
                };
                Some(build_oracle_head(&oracle_data, &config.oracle, seed)?.to_table()?)
            }
        };
        Ok(Self {
            regime: config.regime,
            dim: config.model.dim,
            table,
            rng: substream(seed, "init/head"),
        })
    }

    fn block(&mut self, classes: BlockClasses<'_>) -> Result<ClassifierHead> {
        match (&self.table, self.regime) {
            (None, _) => build_random_head(classes, self.dim, &mut self.rng),
            (Some(table), regime) => build_table_head(classes, table, regime),
        }
    }
}

/// Runs one seed end to end in memory.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<(SeedResult, Option<DriftFeatures>)> {
    config.validate()?;
    let fingerprint = config.fingerprint()?;
    let (dataset, superclass_of) = build_dataset(config, seed)?;
    config.protocol.validate(dataset.class_count())?;
    let stream = split_protocol(&dataset, &config.protocol, seed)?;
    let mut heads = HeadFactory::new(config, &dataset, superclass_of.as_deref(), &stream, seed)?;

    let mut init = substream(seed, "init");
    let encoder = EncoderModel::mlp(dataset.input_dim, &config.model.hidden, config.model.dim, &mut init)?;
    let mut learner = Learner::new(
        stream.protocol,
        encoder,
        ClassifierHead::empty(config.regime),
        config.training.memory_per_class,
        substream(seed, "sampling"),
    );
    let objective = config.objective();
    let n = stream.len();
    let mut accuracy = AccuracyMatrix::new(n);
    let mut task_logs = Vec::with_capacity(n);
    let mut initial_hashes = Vec::new();
    let mut snapshots = Vec::new();

    for task in &stream.tasks {
        let needs_block = stream.protocol != Protocol::DomainIl || task.index == 0;
        if needs_block {
            let block = heads.block(BlockClasses::from(task))?;
            if block.is_frozen() {
                initial_hashes.push((task.index, block.block_fingerprints()[0].clone()));
            }
            learner.add_head(block)?;
        }
        task_logs.push(learner.train_task(task, &config.training)?);
        for earlier in &stream.tasks[..=task.index] {
            let acc = learner.accuracy(&earlier.test, earlier.index, objective)?;
            accuracy.set(earlier.index, task.index, acc)?;
        }
        if config.analysis.drift {
            snapshots.push(learner.features(&stream.tasks[0].test)?);
        }
        log::debug!("seed {seed}: task {} done", task.index);
    }

    let final_hashes = learner.head().block_fingerprints();
    let frozen_blocks = initial_hashes
        .into_iter()
        .map(|(task_index, initial)| {
            let idx = learner
                .head()
                .block_for_task(task_index)
                .ok_or_else(|| Error::Protocol(format!("block of task {task_index} vanished")))?;
            Ok(BlockHash {
                task_index,
                initial,
                last: final_hashes[idx].clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let drift_features = config.analysis.drift.then_some(DriftFeatures { snapshots });
    let drift = match &drift_features {
        Some(f) if f.snapshots.len() > 1 => Some(DriftSeries::from_features(
            f,
            config.analysis.drift_k,
            config.analysis.drift_centered,
        )?),
        _ => None,
    };

    let correlation = if config.analysis.correlation {
        Some(correlation_for(config, &learner, &dataset, &stream, superclass_of.as_deref())?)
    } else {
        None
    };

    let summary = MetricSummary::from_matrix(&accuracy)?;
    Ok((
        SeedResult {
            seed,
            fingerprint,
            accuracy,
            summary,
            drift,
            correlation,
            task_logs,
            frozen_blocks,
            train_sizes: stream.tasks.iter().map(|t| t.train.len()).collect(),
            buffer_size: learner.buffer().len(),
        },
        drift_features,
    ))
}

fn correlation_for(
    config: &ExperimentConfig,
    learner: &Learner,
    dataset: &Dataset,
    stream: &TaskStream,
    superclass_of: Option<&[usize]>,
) -> Result<CorrelationResult> {
    let count = config.analysis.correlation_classes.min(stream.class_order.len());
    let classes: Vec<(usize, String)> = stream.class_order[..count]
        .iter()
        .map(|&c| (c, dataset.class_names[c].clone()))
        .collect();
    let examples: Vec<_> = dataset
        .test
        .iter()
        .filter(|e| classes.iter().any(|(c, _)| *c == e.class_id))
        .cloned()
        .collect();
    let features = learner.features(&examples)?;
    let labels: Vec<usize> = examples.iter().map(|e| e.class_id).collect();
    let report = interclass_correlation(&features, &labels, &classes)?;
    let superclass_gap = match superclass_of {
        Some(supers) => {
            let ids = report.class_ids.clone();
            match report.group_gap(|i| supers[ids[i]]) {
                Ok(g) => Some(g),
                Err(Error::Undefined(_)) => None,
                Err(e) => return Err(e),
            }
        }
        None => None,
    };
    Ok(CorrelationResult {
        report,
        superclass_gap,
    })
}

fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(seed.to_string())
}

fn persist_seed(dir: &Path, result: &SeedResult, features: Option<&DriftFeatures>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("accuracy.csv"), result.accuracy.to_csv().as_bytes())?;
    write_json(&dir.join("summary.json"), &result.summary)?;
    if let Some(d) = &result.drift {
        write_atomic(&dir.join("drift.csv"), drift_csv(&d.points).as_bytes())?;
    }
    if let Some(f) = features {
        write_json(&dir.join("drift_features.json"), f)?;
    }
    if let Some(c) = &result.correlation {
        write_atomic(&dir.join("correlation.csv"), c.report.to_csv().as_bytes())?;
    }
    // written last: its presence marks the seed as complete
    write_json(&dir.join("result.json"), result)
}

/// Reuses a finished seed from an earlier (possibly interrupted) run.
fn resume_seed(dir: &Path, fingerprint: &str) -> Option<SeedResult> {
    let result: SeedResult = read_json(&dir.join("result.json")).ok()?;
    (result.fingerprint == fingerprint).then_some(result)
}

fn execute_seed(config: &ExperimentConfig, run_dir: &Path, seed: u64, options: &RunOptions) -> SeedOutcome {
    let fingerprint = match config.fingerprint() {
        Ok(f) => f,
        Err(e) => return failed(seed, e),
    };
    let dir = seed_dir(run_dir, seed);
    if !options.in_memory {
        if let Some(done) = resume_seed(&dir, &fingerprint) {
            log::info!("seed {seed}: reusing completed output");
            return SeedOutcome::Completed(Box::new(done));
        }
    }
    let outcome = run_seed(config, seed).and_then(|(result, features)| {
        if !options.in_memory {
            persist_seed(&dir, &result, features.as_ref())?;
        }
        Ok(result)
    });
    match outcome {
        Ok(r) => SeedOutcome::Completed(Box::new(r)),
        Err(e) => {
            log::error!("seed {seed} failed: {e}");
            failed(seed, e)
        }
    }
}

fn failed(seed: u64, e: Error) -> SeedOutcome {
    SeedOutcome::Failed {
        seed,
        kind: e.kind().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub runs: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub fingerprint: String,
    pub record: PathBuf,
}

fn update_manifest(output_dir: &Path, record: &RunRecord) -> Result<()> {
    let path = output_dir.join("manifest.json");
    let mut manifest: Manifest = if path.exists() { read_json(&path)? } else { Manifest::default() };
    let entry = ManifestEntry {
        name: record.name.clone(),
        fingerprint: record.fingerprint.clone(),
        record: PathBuf::from(&record.fingerprint).join("record.json"),
    };
    manifest
        .runs
        .retain(|e| !(e.name == entry.name && e.fingerprint == entry.fingerprint));
    manifest.runs.push(entry);
    write_json(&path, &manifest)
}

/// Runs every seed of `config`, persisting outputs under
/// `<output_dir>/<fingerprint>/<seed>/`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    run_experiment_with(config, &RunOptions::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, options: &RunOptions) -> Result<RunRecord> {
    config.validate()?;
    let started = Instant::now();
    let fingerprint = config.fingerprint()?;
    let run_dir = config.output_dir.join(&fingerprint);
    if !options.in_memory {
        std::fs::create_dir_all(&run_dir)?;
        write_atomic(&run_dir.join("config.toml"), config.to_toml()?.as_bytes())?;
    }
    let seeds = run_seeds(config, &run_dir, options)?;
    let record = RunRecord {
        name: config.name.clone(),
        fingerprint,
        protocol_fingerprint: config.protocol_fingerprint()?,
        framework_version: FRAMEWORK_VERSION.to_string(),
        config: config.clone(),
        seeds,
        deviations: deviations(config),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    if !options.in_memory {
        write_json(&run_dir.join("record.json"), &record)?;
        update_manifest(&config.output_dir, &record)?;
    }
    Ok(record)
}

#[cfg(feature = "parallel")]
fn run_seeds(config: &ExperimentConfig, run_dir: &Path, options: &RunOptions) -> Result<Vec<SeedOutcome>> {
    use rayon::prelude::*;
    let work = || {
        config
            .seeds
            .par_iter()
            .map(|&s| execute_seed(config, run_dir, s, options))
            .collect()
    };
    match options.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_seeds(config: &ExperimentConfig, run_dir: &Path, options: &RunOptions) -> Result<Vec<SeedOutcome>> {
    Ok(config
        .seeds
        .iter()
        .map(|&s| execute_seed(config, run_dir, s, options))
        .collect())
}

/// Recomputes drift for every completed seed of a persisted record.
pub fn analyze_drift(record_path: &Path, k: usize, centered: bool) -> Result<Vec<(u64, DriftSeries)>> {
    let record = RunRecord::load(record_path)?;
    let run_dir = record_path
        .parent()
        .ok_or_else(|| Error::Config("record path has no parent directory".into()))?;
    let mut out = Vec::new();
    for result in record.completed() {
        let dir = seed_dir(run_dir, result.seed);
        let path = dir.join("drift_features.json");
        if !path.exists() {
            return Err(Error::Config(format!(
                "{} missing; rerun with drift analysis enabled",
                path.display()
            )));
        }
        let features: DriftFeatures = read_json(&path)?;
        let series = DriftSeries::from_features(&features, k, centered)?;
        write_atomic(&dir.join(format!("drift_k{k}.csv")), drift_csv(&series.points).as_bytes())?;
        out.push((result.seed, series));
    }
    Ok(out)
}
