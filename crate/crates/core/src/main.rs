use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lingocl::runner::{
    analyze_drift, compare, run_experiment_with, sweep, write_atomic, write_json, ExperimentConfig,
    RunOptions, RunRecord, SweepAxis,
};
use lingocl::supervision::{fallback_targets, FallbackSource};
use lingocl::taskstream::load_dataset;
use lingocl::taskstream::synthetic::parse_class_name;
use lingocl::{Error, Result};

#[derive(Parser)]
#[command(name = "lingocl", version, about = "Continual-learning experiments with semantic classifier heads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config.
    Run {
        config: PathBuf,
        /// Worker threads for seeds.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Tabulate Last/Avg/Forget over run records.
    Compare {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// Name of the record the deltas are taken against.
        #[arg(long)]
        baseline: String,
        /// Write CSV here as well as JSON to stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run one experiment per value of a swept parameter.
    Sweep {
        config: PathBuf,
        /// e.g. `exemplars=2,5,10,20`, `shots=4,8,16,32`, `initial_classes=8,16`.
        #[arg(long)]
        axis: String,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a target table without a language model.
    GenEmbeddingsFallback {
        /// Dataset file whose class names are used.
        dataset: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recompute representation drift of a finished run for another k.
    AnalyzeDrift {
        record: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        uncentered: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Hierarchy,
    Hash,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, workers } => {
            let config = ExperimentConfig::load(&config)?;
            let record = run_experiment_with(&config, &RunOptions { workers, in_memory: false })?;
            let failures = record.failures();
            print_json(&serde_json::json!({
                "name": record.name,
                "fingerprint": record.fingerprint,
                "record": record.run_dir().join("record.json"),
                "completed": record.seeds.len() - failures,
                "failed": failures,
            }))?;
            if failures == record.seeds.len() {
                return Err(Error::Incomplete("every seed failed".into()));
            }
            Ok(())
        }
        Command::Compare { records, baseline, csv } => {
            let records = records
                .iter()
                .map(|p| RunRecord::load(p))
                .collect::<Result<Vec<_>>>()?;
            let table = compare(&records, &baseline)?;
            if let Some(path) = csv {
                write_atomic(&path, table.to_csv().as_bytes())?;
            }
            print_json(&table)
        }
        Command::Sweep { config, axis, workers } => {
            let config = ExperimentConfig::load(&config)?;
            let axis: SweepAxis = axis.parse()?;
            let records = sweep(&config, &axis, &RunOptions { workers, in_memory: false })?;
            let summary: Vec<_> = records
                .iter()
                .zip(axis.values())
                .map(|(r, v)| {
                    serde_json::json!({
                        "value": v,
                        "name": r.name,
                        "record": r.run_dir().join("record.json"),
                        "failed": r.failures(),
                    })
                })
                .collect();
            let out = serde_json::json!({ "axis": axis.label(), "runs": summary });
            write_json(&config.output_dir.join(format!("sweep-{}.json", axis.label())), &out)?;
            print_json(&out)
        }
        Command::GenEmbeddingsFallback { dataset, mode, output, dim, alpha, seed } => {
            let file = load_dataset(&dataset)?;
            let table = match mode {
                Mode::Hash => fallback_targets(FallbackSource::Hash { names: &file.class_names }, dim, seed)?,
                Mode::Hierarchy => {
                    let supers = file
                        .class_names
                        .iter()
                        .map(|n| {
                            parse_class_name(n).map(|(s, _)| s).ok_or_else(|| {
                                Error::Config(format!("class name {n:?} carries no superclass"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    fallback_targets(
                        FallbackSource::Hierarchy {
                            names: &file.class_names,
                            superclass_of: &supers,
                            alpha,
                        },
                        dim,
                        seed,
                    )?
                }
            };
            table.save(&output)?;
            print_json(&serde_json::json!({ "classes": table.len(), "dim": table.dim(), "output": output }))
        }
        Command::AnalyzeDrift { record, k, uncentered } => {
            let series = analyze_drift(&record, k, !uncentered)?;
            let out: Vec<_> = series
                .iter()
                .map(|(seed, s)| serde_json::json!({ "seed": seed, "k": s.k, "centered": s.centered, "points": s.points }))
                .collect();
            print_json(&out)
        }
    }
}
