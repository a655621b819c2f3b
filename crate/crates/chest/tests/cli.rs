//! End-to-end tests of the command-line surface: artifact layout,
//! reproducibility from snapshots, exit codes, and the ablation grid.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use chest::cli::{read_metrics, run, Command, ExperimentConfig, MetricsRecord, RunOptions};
use chest::error::ChestError;

/// A hierarchy small enough that a full train-eval cycle takes well under
/// a second: 4 classes, 24 train and 16 test examples in 8 dimensions.
const CONFIG: &str = r#"
[encoder]
input_dim = 8
embed_dim = 6

[proxies]
per_class = 2
hyperbolic_dim = 4

[train]
batch_size = 12
steps = 8
seed = 11

[data.hierarchy]
super_classes = 2
sub_per_super = 2
train_per_class = 6
test_per_class = 4
input_dim = 8

[eval]
recall_ks = [1, 2]
"#;

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, CONFIG).unwrap();
    path
}

fn opts(command: Command, config: &Path, out: &Path) -> RunOptions {
    RunOptions {
        command,
        config: config.to_path_buf(),
        overrides: Vec::new(),
        out: Some(out.to_path_buf()),
        seed: None,
    }
}

/// Metrics with the wall-clock field zeroed, for comparisons across runs.
fn timeless(records: &[MetricsRecord]) -> Vec<MetricsRecord> {
    records
        .iter()
        .cloned()
        .map(|mut r| {
            r.wall_time = 0.0;
            r
        })
        .collect()
}

#[test]
fn train_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(run(&opts(Command::Train, &config, &out)), 0);
    for name in ["config.toml", "metrics.jsonl", "model.ckpt"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let records = read_metrics(&out.join("metrics.jsonl")).unwrap();
    assert_eq!(records.len(), 9);
    for (i, record) in records[..8].iter().enumerate() {
        assert_eq!(record.step, i + 1);
        assert!(record.euclidean.is_none());
    }
    let last = &records[8];
    assert_eq!(last.step, 8);
    let report_e = last.euclidean.as_ref().unwrap();
    let report_h = last.hyperbolic.as_ref().unwrap();
    for report in [report_e, report_h] {
        assert_eq!(report.recall_at.keys().copied().collect::<Vec<_>>(), [1, 2]);
    }
}

#[test]
fn rerun_and_snapshot_rerun_reproduce_metrics_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let (first, second, third) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    assert_eq!(run(&opts(Command::Train, &config, &first)), 0);
    assert_eq!(run(&opts(Command::Train, &config, &second)), 0);
    let snapshot = first.join("config.toml");
    assert_eq!(run(&opts(Command::Train, &snapshot, &third)), 0);
    let baseline = timeless(&read_metrics(&first.join("metrics.jsonl")).unwrap());
    for out in [&second, &third] {
        let records = timeless(&read_metrics(&out.join("metrics.jsonl")).unwrap());
        assert_eq!(records, baseline);
    }
}

#[test]
fn eval_reuses_the_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(run(&opts(Command::Train, &config, &out)), 0);
    assert_eq!(run(&opts(Command::Eval, &config, &out)), 0);
    assert!(out.join("eval-config.toml").exists());
    let train_records = read_metrics(&out.join("metrics.jsonl")).unwrap();
    let eval_records = read_metrics(&out.join("eval.jsonl")).unwrap();
    assert_eq!(eval_records.len(), 1);
    assert_eq!(eval_records[0].step, 0);
    let trained = train_records.last().unwrap();
    assert_eq!(eval_records[0].euclidean, trained.euclidean);
    assert_eq!(eval_records[0].hyperbolic, trained.hyperbolic);
}

#[test]
fn ablation_rows_match_independent_train_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("grid");
    assert_eq!(run(&opts(Command::Ablate, &config, &out)), 0);
    let tsv = fs::read_to_string(out.join("ablation.tsv")).unwrap();
    let rows: Vec<&str> = tsv.lines().collect();
    assert_eq!(rows.len(), 9, "{tsv}");
    assert!(rows[0].starts_with("cell\t"));

    // An independent train run with the same settings as the e-k1 cell
    // must land on the same retrieval numbers.
    let row = rows.iter().find(|r| r.starts_with("e-k1\t")).unwrap();
    let fields: Vec<&str> = row.split('\t').collect();
    let independent = dir.path().join("independent");
    let mut independent_opts = opts(Command::Train, &config, &independent);
    independent_opts.overrides = [
        ("loss.eta_h", "0"),
        ("loss.eta_e", "1"),
        ("loss.tau", "0"),
        ("proxies.per_class", "1"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    assert_eq!(run(&independent_opts), 0);
    let records = read_metrics(&independent.join("metrics.jsonl")).unwrap();
    let last = records.last().unwrap();
    let r1_e = last.euclidean.as_ref().unwrap().recall_at[&1];
    let r1_h = last.hyperbolic.as_ref().unwrap().recall_at[&1];
    assert_eq!(fields[5], format!("{r1_e:.6}"));
    assert_eq!(fields[6], format!("{r1_h:.6}"));

    let cell_dir = out.join("cells").join("e-k1");
    for name in ["config.toml", "metrics.jsonl", "model.ckpt"] {
        assert!(cell_dir.join(name).exists(), "missing {name}");
    }
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    let mut bad = opts(Command::Train, &config, &out);
    bad.overrides = vec![("proxies.per_class".to_string(), "1".to_string())];
    assert_eq!(run(&bad), 1);
    let mut typo = opts(Command::Train, &config, &out);
    typo.overrides = vec![("trian.steps".to_string(), "3".to_string())];
    assert_eq!(run(&typo), 1);
    assert!(!out.exists());
}

#[test]
fn eval_without_checkpoint_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("never-trained");
    assert_eq!(run(&opts(Command::Eval, &config, &out)), 2);
}

#[test]
fn check_suites_exit_with_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("unused");
    assert_eq!(run(&opts(Command::CheckGeometry, &config, &out)), 0);
    assert_eq!(run(&opts(Command::CheckGrad, &config, &out)), 0);
}

#[test]
fn seed_option_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let (first, second) = (dir.path().join("a"), dir.path().join("b"));
    let mut seeded = opts(Command::Train, &config, &first);
    seeded.seed = Some(99);
    assert_eq!(run(&seeded), 0);
    assert_eq!(run(&opts(Command::Train, &config, &second)), 0);
    let snapshot = ExperimentConfig::load(&first.join("config.toml"), &[], None).unwrap();
    assert_eq!(snapshot.train.seed, 99);
    let a = timeless(&read_metrics(&first.join("metrics.jsonl")).unwrap());
    let b = timeless(&read_metrics(&second.join("metrics.jsonl")).unwrap());
    assert_ne!(a, b);
}

#[test]
fn library_errors_map_to_documented_exit_codes() {
    assert_eq!(ChestError::Config(vec!["rule".into()]).exit_code(), 1);
    assert_eq!(ChestError::NonFinite("loss".into()).exit_code(), 2);
}

#[test]
fn binary_runs_check_geometry_and_rejects_malformed_set() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let ok = Process::new(env!("CARGO_BIN_EXE_chest"))
        .args(["check-geometry", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert_eq!(ok.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("geometry suite: PASS"), "{stdout}");

    let bad = Process::new(env!("CARGO_BIN_EXE_chest"))
        .args(["train", "--config"])
        .arg(&config)
        .args(["--set", "train.steps"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("KEY=VALUE"));
}
