//! Text dataset format:
//!
//! ```text
//! dim <d_in> classes <n>
//! <class_name>\t<domain_id>\t<v1> ... <v_din>
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Dataset, LabeledExample};
use crate::error::{Error, Result};

/// Parsed dataset file: input width, class names in first-appearance order
/// and the examples.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub input_dim: usize,
    pub class_names: Vec<String>,
    pub examples: Vec<LabeledExample>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn parse_dataset(text: &str) -> Result<DatasetFile> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty dataset file"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let (input_dim, declared_classes) = match tokens.as_slice() {
        ["dim", d, "classes", n] => (
            d.parse::<usize>()
                .map_err(|_| parse_err(1, format!("bad dim {d:?}")))?,
            n.parse::<usize>()
                .map_err(|_| parse_err(1, format!("bad class count {n:?}")))?,
        ),
        _ => return Err(parse_err(1, "expected header `dim <d> classes <n>`")),
    };
    let mut class_names = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut examples = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let mut parts = line.splitn(3, '\t');
        let (name, domain, values) = match (parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(d), Some(v)) => (n, d, v),
            _ => return Err(parse_err(lineno, "expected `<name>\\t<domain>\\t<values>`")),
        };
        if name.is_empty() {
            return Err(parse_err(lineno, "empty class name"));
        }
        let domain_id = domain
            .trim()
            .parse::<usize>()
            .map_err(|_| parse_err(lineno, format!("bad domain id {domain:?}")))?;
        let features = values
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(lineno, format!("bad value {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if features.len() != input_dim {
            return Err(parse_err(
                lineno,
                format!("{} values, header declares {input_dim}", features.len()),
            ));
        }
        let class_id = *index.entry(name.to_string()).or_insert_with(|| {
            class_names.push(name.to_string());
            class_names.len() - 1
        });
        examples.push(LabeledExample {
            features,
            class_id,
            class_name: name.to_string(),
            domain_id,
        });
    }
    if class_names.len() != declared_classes {
        return Err(parse_err(
            1,
            format!(
                "header declares {declared_classes} classes, file contains {}",
                class_names.len()
            ),
        ));
    }
    Ok(DatasetFile {
        input_dim,
        class_names,
        examples,
    })
}

pub fn load_dataset(path: &Path) -> Result<DatasetFile> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

/// Loads separate train and test files into one [`Dataset`]; class ids
/// follow first appearance in the train file.
pub fn load_dataset_pair(train: &Path, test: &Path) -> Result<Dataset> {
    let train = load_dataset(train)?;
    let test = load_dataset(test)?;
    if train.input_dim != test.input_dim {
        return Err(Error::Shape(format!(
            "train dim {} != test dim {}",
            train.input_dim, test.input_dim
        )));
    }
    let index: HashMap<&str, usize> = train
        .class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let test_examples = test
        .examples
        .into_iter()
        .map(|mut e| {
            let id = *index.get(e.class_name.as_str()).ok_or_else(|| {
                Error::Protocol(format!("test class {:?} absent from train set", e.class_name))
            })?;
            e.class_id = id;
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        input_dim: train.input_dim,
        class_names: train.class_names,
        train: train.examples,
        test: test_examples,
    })
}

pub fn format_dataset(input_dim: usize, class_names: &[String], examples: &[LabeledExample]) -> String {
    let mut out = format!("dim {input_dim} classes {}\n", class_names.len());
    for e in examples {
        let _ = write!(out, "{}\t{}\t", e.class_name, e.domain_id);
        let values: Vec<String> = e.features.iter().map(|v| v.to_string()).collect();
        out.push_str(&values.join(" "));
        out.push('\n');
    }
    out
}

pub fn save_dataset(
    path: &Path,
    input_dim: usize,
    class_names: &[String],
    examples: &[LabeledExample],
) -> Result<()> {
    std::fs::write(path, format_dataset(input_dim, class_names, examples))?;
    Ok(())
}
