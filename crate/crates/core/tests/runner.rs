mod common;

use std::fs;

use common::*;
use lingocl::clmethods::Method;
use lingocl::runner::{
    compare, run_experiment, run_experiment_with, sweep, sweep_configs, ExperimentConfig, Manifest,
    RunOptions, RunRecord, Stat, SweepAxis,
};
use lingocl::supervision::Regime;
use lingocl::taskstream::{Protocol, ProtocolConfig};
use lingocl::Error;

fn in_memory() -> RunOptions {
    RunOptions { workers: None, in_memory: true }
}

fn summaries(r: &RunRecord) -> String {
    serde_json::to_string(&r.seeds).unwrap()
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let a = run_experiment_with(&config, &in_memory()).unwrap();
    let b = run_experiment_with(&config, &RunOptions { workers: Some(1), in_memory: true }).unwrap();
    assert_eq!(a.failures(), 0);
    assert_eq!(summaries(&a), summaries(&b));
}

#[test]
fn output_layout() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let record = run_experiment(&config).unwrap();
    let run_dir = record.run_dir();
    assert_eq!(run_dir, dir.path().join(config.fingerprint().unwrap()));
    for file in ["record.json", "config.toml"] {
        assert!(run_dir.join(file).is_file(), "{file}");
    }
    for seed in &config.seeds {
        let seed_dir = run_dir.join(seed.to_string());
        for file in [
            "accuracy.csv",
            "summary.json",
            "drift.csv",
            "drift_features.json",
            "correlation.csv",
            "result.json",
        ] {
            assert!(seed_dir.join(file).is_file(), "{seed}/{file}");
        }
        let csv = fs::read_to_string(seed_dir.join("accuracy.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "after_task,task_0,task_1,task_2,task_3");
        // row j holds tasks 0..=j; later tasks are empty
        assert!(lines.next().unwrap().ends_with(",,,"));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.runs.len(), 1);
    assert_eq!(RunRecord::load(&run_dir.join("record.json")).unwrap().seeds, record.seeds);
    let saved = ExperimentConfig::from_toml(&fs::read_to_string(run_dir.join("config.toml")).unwrap()).unwrap();
    assert_eq!(saved.fingerprint().unwrap(), record.fingerprint);
}

#[test]
fn interrupted_run_resumes_to_identical_record() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let full = run_experiment(&config).unwrap();
    let run_dir = full.run_dir();

    // seed 1 died before writing its completion marker; seed 0 left a
    // truncated one
    fs::remove_file(run_dir.join("1").join("result.json")).unwrap();
    fs::write(run_dir.join("0").join("result.json"), "{\"seed\": 0, \"finger").unwrap();
    let resumed = run_experiment(&config).unwrap();
    assert_eq!(summaries(&full), summaries(&resumed));

    // a completed seed is reused as-is
    let marker = run_dir.join("0").join("summary.json");
    fs::write(&marker, "sentinel").unwrap();
    run_experiment(&config).unwrap();
    assert_eq!(fs::read_to_string(&marker).unwrap(), "sentinel");
}

#[test]
fn completion_marker_from_another_config_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_config(dir.path());
    let mut b = a.clone();
    b.training.epochs += 1;
    let ra = run_experiment(&a).unwrap();
    // plant a's result where b will look for it
    let b_dir = dir.path().join(b.fingerprint().unwrap()).join("0");
    fs::create_dir_all(&b_dir).unwrap();
    fs::copy(ra.run_dir().join("0").join("result.json"), b_dir.join("result.json")).unwrap();
    let rb = run_experiment(&b).unwrap();
    let seed0 = rb.completed().find(|s| s.seed == 0).unwrap();
    assert_eq!(seed0.fingerprint, b.fingerprint().unwrap());
}

#[test]
fn compare_against_self_and_other() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(dir.path());
    config.seeds = vec![0, 1, 2];
    let a = run_experiment_with(&config, &in_memory()).unwrap();
    let mut other = config.clone();
    other.name = "random".into();
    other.regime = Regime::RandomTrainable;
    let b = run_experiment_with(&other, &in_memory()).unwrap();

    let table = compare(&[a.clone(), b.clone()], "small").unwrap();
    let own = table.row("small").unwrap();
    assert_eq!((own.delta_last, own.delta_avg, own.delta_forget), (0.0, 0.0, Some(0.0)));

    // population statistics from a straight loop
    let avgs: Vec<f64> = a.completed().map(|s| s.summary.avg).collect();
    let mean = (avgs[0] + avgs[1] + avgs[2]) / 3.0;
    let mut var = 0.0;
    for v in &avgs {
        var += (v - mean) * (v - mean);
    }
    let std = (var / 3.0).sqrt();
    assert!((own.avg.mean - mean).abs() < 1e-15);
    assert!((own.avg.std - std).abs() < 1e-15);

    let row = table.row("random").unwrap();
    assert_eq!(row.delta_avg, row.avg.mean - own.avg.mean);
    let csv = table.to_csv();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn single_seed_comparison_gives_raw_differences() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(dir.path());
    config.seeds = vec![4];
    let a = run_experiment_with(&config, &in_memory()).unwrap();
    let mut other = config.clone();
    other.name = "ewc".into();
    other.training.methods = vec![Method::Finetune, Method::Ewc];
    let b = run_experiment_with(&other, &in_memory()).unwrap();
    let table = compare(&[a.clone(), b.clone()], "small").unwrap();
    let (sa, sb) = (&a.completed().next().unwrap().summary, &b.completed().next().unwrap().summary);
    let row = table.row("ewc").unwrap();
    assert_eq!(row.avg.std, 0.0);
    assert_eq!(row.delta_last, sb.last - sa.last);
    assert_eq!(row.delta_forget, Some(sb.forget.unwrap() - sa.forget.unwrap()));
}

#[test]
fn compare_rejects_mismatched_protocols() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let a = run_experiment_with(&config, &in_memory()).unwrap();
    let mut other = config.clone();
    other.name = "other".into();
    other.protocol = ProtocolConfig::class_il(4, 4);
    let b = run_experiment_with(&other, &in_memory()).unwrap();
    assert!(matches!(compare(&[a.clone(), b], "small"), Err(Error::Comparison(_))));
    assert!(matches!(compare(&[a], "missing"), Err(Error::Comparison(_))));
    assert!(matches!(compare(&[], "small"), Err(Error::Comparison(_))));
}

#[test]
fn shot_sweep_limits_incremental_training_sets() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = small_config(dir.path());
    base.seeds = vec![0];
    base.protocol.kind = Protocol::FewshotClassIl;
    base.protocol.shots = Some(1);
    let axis = SweepAxis::Shots(vec![2, 5, 10]);
    let records = sweep(&base, &axis, &in_memory()).unwrap();
    let mut previous_first = None;
    for (k, record) in axis.values().iter().zip(&records) {
        let s = record.completed().next().unwrap();
        // first task keeps every example; later tasks get k per class
        assert_eq!(s.train_sizes[0], 6 * 20);
        assert!(s.train_sizes[1..].iter().all(|&n| n == 2 * k));
        if let Some(p) = previous_first {
            assert_eq!(p, s.train_sizes[0]);
        }
        previous_first = Some(s.train_sizes[0]);
    }
    assert!(matches!(
        sweep_configs(&base, &SweepAxis::Shots(vec![4, 21])),
        Err(Error::Config(_))
    ));
}

#[test]
fn invalid_sweep_value_fails_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    let base = small_config(dir.path());
    let err = sweep(&base, &SweepAxis::InitialClasses(vec![6, 5]), &RunOptions::default());
    assert!(err.is_err());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    let configs = sweep_configs(&base, &SweepAxis::InitialClasses(vec![4, 8])).unwrap();
    assert_eq!(configs[1].protocol.initial_classes, 8);
    assert_eq!(configs[1].name, "small-initial_classes8");
}

#[test]
fn zero_exemplars_matches_plain_finetuning() {
    let dir = tempfile::tempdir().unwrap();
    let base = small_config(dir.path());
    let swept = sweep(&base, &SweepAxis::Exemplars(vec![0]), &in_memory()).unwrap();
    let mut plain = base.clone();
    plain.training.methods = vec![Method::Finetune];
    plain.training.memory_per_class = 0;
    let plain = run_experiment_with(&plain, &in_memory()).unwrap();
    for (a, b) in swept[0].completed().zip(plain.completed()) {
        assert_eq!(a.accuracy, b.accuracy);
        assert_eq!(a.buffer_size, 0);
    }
}

#[test]
fn single_task_stream_has_no_forgetting() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(dir.path());
    config.protocol = ProtocolConfig::class_il(12, 0);
    let record = run_experiment_with(&config, &in_memory()).unwrap();
    for s in record.completed() {
        assert_eq!(s.summary.forget, None);
        assert_eq!(s.summary.avg, s.summary.last);
        assert!(s.drift.as_ref().is_none_or(|d| d.points.is_empty()));
    }
    let table = compare(&[record], "small").unwrap();
    assert!(table.rows[0].forget.is_none());
}

#[test]
fn every_method_set_composes_with_every_regime() {
    use Method::*;
    let dir = tempfile::tempdir().unwrap();
    let mut base = small_config(dir.path());
    base.seeds = vec![3];
    base.training.epochs = 2;
    base.protocol = ProtocolConfig::class_il(6, 3);
    let sets: [&[Method]; 5] = [
        &[Finetune, Rehearsal],
        &[Finetune, Ewc],
        &[Finetune, FeatDistill],
        &[Finetune, GradProject],
        &[Finetune, Rehearsal, Ewc, FeatDistill, GradProject],
    ];
    for regime in [
        Regime::RandomTrainable,
        Regime::SemanticFrozen,
        Regime::SemanticUpdated,
        Regime::OrthogonalFrozen,
        Regime::OracleFrozen,
    ] {
        for set in sets {
            let mut c = base.clone();
            c.regime = regime;
            c.training.methods = set.to_vec();
            let record = run_experiment_with(&c, &in_memory()).unwrap();
            assert_eq!(record.failures(), 0, "{regime:?} {set:?}: {:?}", record.seeds);
            let s = record.completed().next().unwrap();
            assert!(s.accuracy.is_complete());
            assert!((0.0..=1.0).contains(&s.summary.avg));
            assert!(s.frozen_intact());
            assert_eq!(!s.frozen_blocks.is_empty(), regime.is_frozen(), "{regime:?}");
        }
    }
}

#[test]
fn other_protocols_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut task_il = small_config(dir.path());
    task_il.protocol.kind = Protocol::TaskIl;
    let r = run_experiment_with(&task_il, &in_memory()).unwrap();
    assert_eq!(r.failures(), 0);

    let text = SMALL_TOML.replace("kind = \"class_il\"", "kind = \"domain_il\"")
        + "\n[data.domains]\ncount = 3\nseverity = 0.5\n";
    let mut domain = ExperimentConfig::from_toml(&text).unwrap();
    domain.output_dir = dir.path().to_path_buf();
    let r = run_experiment_with(&domain, &in_memory()).unwrap();
    let s = r.completed().next().expect("domain run completes");
    assert_eq!(s.accuracy.tasks(), 3);
    assert_eq!(s.frozen_blocks.len(), 1);
}

#[test]
fn failing_seed_is_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(dir.path());
    // 16 dimensions cannot hold a rank-20 drift subspace
    config.analysis.drift_k = 20;
    let record = run_experiment(&config).unwrap();
    assert_eq!(record.failures(), 2);
    let json = fs::read_to_string(record.run_dir().join("record.json")).unwrap();
    assert!(json.contains("\"status\": \"failed\""));
    assert!(json.contains("\"kind\": \"rank\""));
}

#[test]
fn stat_is_population_std() {
    let s = Stat::of(&[1.0, 3.0]).unwrap();
    assert_eq!((s.mean, s.std), (2.0, 1.0));
    assert!(Stat::of(&[]).is_none());
}
