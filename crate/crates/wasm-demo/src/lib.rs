//! Browser bindings: a tiny class-incremental run, a heatmap of fallback
//! target correlations, and herding on hand-placed 2-D points.

use lingocl::clmethods::{Method, TrainRunConfig};
use lingocl::clmethods::herding_order;
use lingocl::numcore::{cosine, Tensor2D};
use lingocl::runner::{run_seed, AnalysisConfig, DataConfig, EmbeddingsConfig, ExperimentConfig, ModelConfig};
use lingocl::supervision::{fallback_targets, FallbackSource, OracleConfig, Regime};
use lingocl::taskstream::synthetic::class_name;
use lingocl::taskstream::{ProtocolConfig, SyntheticHierarchySpec};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js_err(e: lingocl::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn parse_regime(name: &str) -> Result<Regime, String> {
    Regime::ALL
        .into_iter()
        .find(|r| r.as_str() == name)
        .ok_or_else(|| format!("unknown regime {name:?}"))
}

/// Config of the demo stream: 4 superclasses x 3 classes, 6 classes in the
/// first task and then three tasks of 2.
pub fn mini_config(regime: Regime, seed: u64, exemplars: usize, epochs: usize) -> ExperimentConfig {
    let mut training = TrainRunConfig {
        epochs,
        memory_per_class: exemplars,
        ..TrainRunConfig::default()
    };
    if exemplars == 0 {
        training.methods = vec![Method::Finetune];
    }
    ExperimentConfig {
        name: format!("demo-{}", regime.as_str()),
        seeds: vec![seed],
        output_dir: Default::default(),
        regime,
        protocol: ProtocolConfig::class_il(6, 2),
        data: DataConfig {
            synthetic: Some(SyntheticHierarchySpec {
                superclasses: 4,
                classes_per_superclass: 3,
                input_dim: 12,
                train_per_class: 30,
                test_per_class: 15,
                ..SyntheticHierarchySpec::default()
            }),
            ..DataConfig::default()
        },
        embeddings: EmbeddingsConfig::default(),
        model: ModelConfig {
            hidden: vec![32],
            dim: 16,
        },
        training,
        analysis: AnalysisConfig {
            drift: true,
            drift_k: 4,
            drift_centered: true,
            correlation: true,
            correlation_classes: 12,
        },
        oracle: OracleConfig {
            hidden: vec![32],
            dim: 16,
            ..OracleConfig::default()
        },
    }
}

/// Runs the demo stream and returns JSON with the accuracy matrix (one row
/// per training step), Last/Avg/Forget, drift and the class correlation
/// matrix.
pub fn mini_run_json(regime: &str, seed: u64, exemplars: usize, epochs: usize) -> Result<String, String> {
    let regime = parse_regime(regime)?;
    let config = mini_config(regime, seed, exemplars, epochs);
    let (result, _) = run_seed(&config, seed).map_err(|e| e.to_string())?;
    let n = result.accuracy.tasks();
    let steps: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..=j).filter_map(|i| result.accuracy.get(i, j)).collect())
        .collect();
    let correlation = result.correlation.as_ref().map(|c| {
        json!({
            "names": c.report.class_names,
            "matrix": (0..c.report.class_names.len()).map(|i| c.report.matrix.row(i).to_vec()).collect::<Vec<_>>(),
            "gap": c.superclass_gap,
        })
    });
    Ok(json!({
        "regime": regime.as_str(),
        "steps": steps,
        "last": result.summary.last,
        "avg": result.summary.avg,
        "forget": result.summary.forget,
        "drift": result.drift.map(|d| d.points.iter().map(|p| p.drift).collect::<Vec<_>>()),
        "correlation": correlation,
        "frozen_intact": result.frozen_blocks.iter().all(|b| b.initial == b.last),
    })
    .to_string())
}

/// Cosine matrix of hierarchy fallback targets, row-major, for
/// `supers x per_super` classes.
pub fn target_correlation(alpha: f64, supers: usize, per_super: usize, dim: usize, seed: u64) -> lingocl::Result<Vec<f64>> {
    let names: Vec<String> = (0..supers)
        .flat_map(|s| (0..per_super).map(move |c| class_name(s, c)))
        .collect();
    let superclass_of: Vec<usize> = (0..supers).flat_map(|s| std::iter::repeat_n(s, per_super)).collect();
    let table = fallback_targets(
        FallbackSource::Hierarchy {
            names: &names,
            superclass_of: &superclass_of,
            alpha,
        },
        dim,
        seed,
    )?;
    let rows = table.lookup(&names)?;
    let mut out = Vec::with_capacity(rows.len() * rows.len());
    for a in &rows {
        for b in &rows {
            out.push(cosine(a, b).unwrap_or(0.0));
        }
    }
    Ok(out)
}

/// Herding pick order for 2-D points given as `[x0, y0, x1, y1, ...]`.
pub fn herding_points(xy: &[f64], m: usize) -> lingocl::Result<Vec<u32>> {
    if !xy.len().is_multiple_of(2) {
        return Err(lingocl::Error::Shape("coordinates must come in pairs".into()));
    }
    let points = Tensor2D::from_vec(xy.len() / 2, 2, xy.to_vec())?;
    Ok(herding_order(&points, m)?.into_iter().map(|i| i as u32).collect())
}

#[wasm_bindgen]
pub fn run_stream(regime: &str, seed: u32, exemplars: u32, epochs: u32) -> Result<String, JsValue> {
    mini_run_json(regime, seed as u64, exemplars as usize, epochs as usize).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn target_heatmap(alpha: f64, supers: u32, per_super: u32, seed: u32) -> Result<Vec<f64>, JsValue> {
    target_correlation(alpha, supers as usize, per_super as usize, 16, seed as u64).map_err(js_err)
}

#[wasm_bindgen]
pub fn herding(xy: &[f64], m: u32) -> Result<Vec<u32>, JsValue> {
    herding_points(xy, m as usize).map_err(js_err)
}
