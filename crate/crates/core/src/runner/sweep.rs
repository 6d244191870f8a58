use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{run_experiment_with, RunOptions, RunRecord};
use crate::clmethods::Method;
use crate::error::{Error, Result};
use crate::taskstream::Protocol;

/// A swept hyperparameter with its values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "axis", content = "values")]
pub enum SweepAxis {
    /// Exemplars stored per class.
    Exemplars(Vec<usize>),
    /// Few-shot training examples per class.
    Shots(Vec<usize>),
    /// Classes in the first task.
    InitialClasses(Vec<usize>),
}

impl SweepAxis {
    pub fn label(&self) -> &'static str {
        match self {
            SweepAxis::Exemplars(_) => "exemplars",
            SweepAxis::Shots(_) => "shots",
            SweepAxis::InitialClasses(_) => "initial_classes",
        }
    }

    pub fn values(&self) -> &[usize] {
        match self {
            SweepAxis::Exemplars(v) | SweepAxis::Shots(v) | SweepAxis::InitialClasses(v) => v,
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    /// Parses `name=v1,v2,...` with name one of `exemplars`, `shots`
    /// (alias `k`) or `initial_classes` (alias `b`).
    fn from_str(s: &str) -> Result<Self> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("axis {s:?} should look like name=v1,v2")))?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad axis value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match name.trim().to_ascii_lowercase().as_str() {
            "exemplars" | "exemplars_per_class" => Ok(SweepAxis::Exemplars(values)),
            "shots" | "k" => Ok(SweepAxis::Shots(values)),
            "initial_classes" | "b" => Ok(SweepAxis::InitialClasses(values)),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        }
    }
}

/// One config per axis value, each validated before anything runs.
pub fn sweep_configs(base: &ExperimentConfig, axis: &SweepAxis) -> Result<Vec<ExperimentConfig>> {
    if axis.values().is_empty() {
        return Err(Error::Config("sweep axis has no values".into()));
    }
    let total = base.class_total()?;
    axis.values()
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            c.name = format!("{}-{}{v}", base.name, axis.label());
            match axis {
                SweepAxis::Exemplars(_) => {
                    c.training.memory_per_class = v;
                    if v > 0 && !c.training.uses(Method::Rehearsal) {
                        c.training.methods.push(Method::Rehearsal);
                        c.training.methods.sort();
                    }
                }
                SweepAxis::Shots(_) => {
                    if c.protocol.kind != Protocol::FewshotClassIl {
                        return Err(Error::Config("shots axis needs the few-shot protocol".into()));
                    }
                    if v == 0 {
                        return Err(Error::Config("shot count must be positive".into()));
                    }
                    if let Some(spec) = &c.data.synthetic {
                        if v > spec.train_per_class {
                            return Err(Error::Config(format!(
                                "{v} shots exceed {} training examples per class",
                                spec.train_per_class
                            )));
                        }
                    }
                    c.protocol.shots = Some(v);
                }
                SweepAxis::InitialClasses(_) => {
                    if c.protocol.kind == Protocol::DomainIl {
                        return Err(Error::Config("domain_il has no initial class count".into()));
                    }
                    c.protocol.initial_classes = v;
                }
            }
            c.protocol
                .validate(total)
                .map_err(|e| Error::Config(format!("{} = {v}: {e}", axis.label())))?;
            c.validate()?;
            Ok(c)
        })
        .collect()
}

/// Runs the whole family. Every point shares the base seeds and therefore
/// the same data and class order.
pub fn sweep(base: &ExperimentConfig, axis: &SweepAxis, options: &RunOptions) -> Result<Vec<RunRecord>> {
    sweep_configs(base, axis)?
        .iter()
        .map(|c| run_experiment_with(c, options))
        .collect()
}
