use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tcn_nids::eval::{parse_confusion_csv, ClassificationReport};
use tcn_nids::nn::{build_tcn, load_model, save_model, ArchConfig, Model};
use tcn_nids::numerics::derive_seed;
use tcn_nids::optim::EpochLog;
use tcn_nids::pipeline::{read_split, Sidecar, SIDECAR_FILE};

const SMALL: &str = r#"
[fixture]
per_class = 40
numeric_features = 8
categorical_features = 2

[pipeline]
fraction = 1.0

[model.arch]
channels = 8
dilations = [1, 2]
head_units = 16

[train]
epochs = 3
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tcn-nids"));
    c.env_remove("TCN_NIDS_DATA_DIR").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn only_dir(parent: &Path, prefix: &str) -> PathBuf {
    let mut found: Vec<PathBuf> = fs::read_dir(parent)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    assert_eq!(found.len(), 1, "expected one {prefix}* in {}", parent.display());
    found.pop().unwrap()
}

/// Preprocesses the small fixture and returns the split directory.
fn small_split(root: &Path, config: &Path) -> PathBuf {
    ok(&["preprocess", "--fixture", "--config", s(config), "--seed", "3", "--out", s(root)]);
    only_dir(root, "split-")
}

fn small_model(root: &Path, config: &Path, split: &Path) -> PathBuf {
    ok(&["train", "--config", s(config), "--seed", "3", "--data", s(split), "--out", s(root)]);
    only_dir(root, "model-tcn-")
}

#[test]
fn fixture_is_deterministic_and_balanced() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let stdout = ok(&["fixture", "--seed", "1", "--out", s(a.path())]);
    assert!(stdout.contains("4500 rows"), "{stdout}");
    ok(&["fixture", "--seed", "1", "--out", s(b.path())]);
    let bytes = fs::read(a.path().join("fixture.csv")).unwrap();
    assert_eq!(bytes, fs::read(b.path().join("fixture.csv")).unwrap());

    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let label = reader.headers().unwrap().iter().position(|h| h == "Attack_type").unwrap();
    let mut counts = std::collections::BTreeMap::new();
    for rec in reader.records() {
        *counts.entry(rec.unwrap()[label].to_string()).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 15);
    assert!(counts.values().all(|&n| n == 300));

    ok(&["fixture", "--seed", "2", "--out", s(b.path())]);
    assert_ne!(bytes, fs::read(b.path().join("fixture.csv")).unwrap());
}

#[test]
fn fixture_rejects_empty_classes() {
    let d = tempfile::tempdir().unwrap();
    let err = fails(&["fixture", "--seed", "1", "--per-class", "0", "--out", s(d.path())]);
    assert!(err.starts_with("error:"), "{err}");
}

#[test]
fn seed_is_required() {
    let d = tempfile::tempdir().unwrap();
    let err = fails(&["fixture", "--out", s(d.path())]);
    assert!(err.contains("seed"), "{err}");
}

#[test]
fn preprocess_splits_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = write_config(a.path(), SMALL);
    let split_a = small_split(a.path(), &config);
    let split_b = small_split(b.path(), &config);
    assert_eq!(split_a.file_name(), split_b.file_name());

    let (split, sidecar) = read_split(&split_a).unwrap();
    assert_eq!((split.train.rows, split.val.rows, split.test.rows), (420, 60, 120));
    assert_eq!(sidecar.rows.train, 420);
    for name in ["train.bin", "val.bin", "test.bin", SIDECAR_FILE, "cleaning_report.json"] {
        let x = fs::read(split_a.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(x, fs::read(split_b.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn preprocess_names_a_missing_label_column() {
    let d = tempfile::tempdir().unwrap();
    let csv = d.path().join("nolabel.csv");
    fs::write(&csv, "a,b\n1,2\n3,4\n").unwrap();
    let err = fails(&["preprocess", "--seed", "1", "--data", s(&csv), "--out", s(d.path())]);
    assert!(err.contains("Attack_type"), "{err}");
}

#[test]
fn data_dir_env_resolves_relative_paths() {
    let d = tempfile::tempdir().unwrap();
    ok(&["fixture", "--seed", "1", "--per-class", "10", "--out", s(d.path())]);
    let out = d.path().join("out");
    let status = bin()
        .args(["preprocess", "--seed", "1", "--data", "fixture.csv", "--out", s(&out)])
        .env("TCN_NIDS_DATA_DIR", d.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    only_dir(&out, "split-");
}

#[test]
fn train_logs_epochs_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = write_config(a.path(), SMALL);
    let split = small_split(a.path(), &config);
    let model_a = small_model(a.path(), &config, &split);
    let model_b = small_model(b.path(), &config, &split);

    let log = fs::read_to_string(model_a.join("train_log.jsonl")).unwrap();
    let logs: Vec<EpochLog> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(logs.iter().map(|l| l.epoch).collect::<Vec<_>>(), [1, 2, 3]);
    assert_eq!(
        fs::read(model_a.join("model.tcnm")).unwrap(),
        fs::read(model_b.join("model.tcnm")).unwrap()
    );
}

#[test]
fn zero_learning_rate_keeps_initial_weights() {
    let d = tempfile::tempdir().unwrap();
    let config = write_config(d.path(), SMALL);
    let split = small_split(d.path(), &config);
    ok(&["train", "--config", s(&config), "--seed", "3", "--data", s(&split), "--out", s(d.path()), "--lr", "0"]);
    let trained = load_model(only_dir(d.path(), "model-tcn-").join("model.tcnm")).unwrap();
    let fresh = Model::from_build(trained.build_config().unwrap().clone(), derive_seed(3, "init")).unwrap();
    assert_eq!(trained.parameters(), fresh.parameters());
}

#[test]
fn train_rejects_a_changed_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let config = write_config(d.path(), SMALL);
    let split = small_split(d.path(), &config);
    let changed = write_config(d.path(), &SMALL.replace("fraction = 1.0", "fraction = 0.5"));
    let err = fails(&["train", "--config", s(&changed), "--seed", "3", "--data", s(&split), "--out", s(d.path())]);
    assert!(err.contains("config hash"), "{err}");
}

#[test]
fn evaluate_writes_consistent_reports() {
    let d = tempfile::tempdir().unwrap();
    let config = write_config(d.path(), SMALL);
    let split = small_split(d.path(), &config);
    let model = small_model(d.path(), &config, &split);
    let stdout = ok(&["evaluate", "--model", s(&model), "--data", s(&split), "--split", "test"]);
    assert!(stdout.starts_with("test: accuracy"), "{stdout}");

    let json = fs::read_dir(&model)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "json") && p.to_string_lossy().contains("report_"))
        .expect("json report");
    let report: ClassificationReport = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    assert_eq!(report.total_support, 120);
    assert_eq!(report.averages.weighted.recall, report.accuracy);

    let text = fs::read_to_string(json.with_extension("txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 15 + 3);
    assert!(lines.last().unwrap().starts_with("Weighted avg"));
    let svg = json.with_extension("svg").to_string_lossy().replace("report_", "confusion_");
    assert!(fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn single_class_data_is_learned_exactly() {
    let d = tempfile::tempdir().unwrap();
    let config = write_config(d.path(), &SMALL.replace("per_class = 40", "per_class = 40\nclasses = 1"));
    let split = small_split(d.path(), &config);
    ok(&["train", "--config", s(&config), "--seed", "3", "--data", s(&split), "--out", s(d.path()), "--epochs", "40"]);
    let model = only_dir(d.path(), "model-tcn-");
    let stdout = ok(&["evaluate", "--model", s(&model), "--data", s(&split), "--split", "train", "--format", "json"]);
    assert!(stdout.starts_with("train: accuracy 1.0000"), "{stdout}");
}

#[test]
fn evaluate_rejects_a_mismatched_model() {
    let d = tempfile::tempdir().unwrap();
    let config = write_config(d.path(), SMALL);
    let split = small_split(d.path(), &config);
    let (_, sidecar) = read_split(&split).unwrap();
    let arch = ArchConfig {
        input_length: sidecar.feature_names.len(),
        num_classes: 3,
        channels: 4,
        dilations: vec![1],
        head_units: 4,
        ..Default::default()
    };
    let path = d.path().join("other.tcnm");
    save_model(&Model::new(build_tcn(&arch).unwrap(), 1).unwrap(), &path).unwrap();
    let err = fails(&["evaluate", "--model", s(&path), "--data", s(&split)]);
    assert!(err.contains("3 classes"), "{err}");
}

#[test]
fn evaluate_rejects_a_model_from_another_split() {
    let d = tempfile::tempdir().unwrap();
    let other = tempfile::tempdir().unwrap();
    let config = write_config(d.path(), SMALL);
    let split = small_split(d.path(), &config);
    let model = small_model(d.path(), &config, &split);
    ok(&["preprocess", "--fixture", "--config", s(&config), "--seed", "4", "--out", s(other.path())]);
    let other_split = only_dir(other.path(), "split-");
    let err = fails(&["evaluate", "--model", s(&model), "--data", s(&other_split)]);
    assert!(err.contains("different split"), "{err}");
}

/// Runs `fixture` with the same settings and seed the split was built from.
fn raw_fixture(root: &Path, config: &Path) -> PathBuf {
    let raw = root.join("raw");
    ok(&["fixture", "--config", s(config), "--seed", "3", "--out", s(&raw)]);
    raw.join("fixture.csv")
}

fn feature_only_csv(src: &Path, dst: &Path, rows: Option<&[usize]>) {
    let mut reader = csv::Reader::from_path(src).unwrap();
    let headers = reader.headers().unwrap().clone();
    let keep: Vec<usize> = (0..headers.len()).filter(|&i| &headers[i] != "Attack_type").collect();
    let mut w = csv::Writer::from_path(dst).unwrap();
    w.write_record(keep.iter().map(|&i| &headers[i])).unwrap();
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    if let Some(rows) = rows {
        for &r in rows {
            w.write_record(keep.iter().map(|&i| &records[r][i])).unwrap();
        }
    }
    w.flush().unwrap();
}

#[test]
fn predict_reproduces_the_training_confusion_matrix() {
    let d = tempfile::tempdir().unwrap();
    let config = write_config(d.path(), SMALL);
    let split = small_split(d.path(), &config);
    let model = small_model(d.path(), &config, &split);
    let raw = raw_fixture(d.path(), &config);
    let (data, sidecar): (_, Sidecar) = read_split(&split).unwrap();
    assert_eq!(tcn_nids::pipeline::sha256_hex(&fs::read(&raw).unwrap()), sidecar.dataset_hash);

    let rows = d.path().join("train_rows.csv");
    feature_only_csv(&raw, &rows, Some(&data.train.origin_rows));
    let preds = ok(&["predict", "--model", s(&model), "--data", s(&rows)]);
    let mut reader = csv::Reader::from_reader(preds.as_bytes());
    assert_eq!(reader.headers().unwrap(), vec!["row_index", "class_name", "probability"]);
    let predicted: Vec<usize> = reader
        .records()
        .map(|r| sidecar.classes.index_of(&r.unwrap()[1]).unwrap())
        .collect();
    assert_eq!(predicted.len(), data.train.rows);

    ok(&["evaluate", "--model", s(&model), "--data", s(&split), "--split", "train", "--out", s(d.path())]);
    let csv_path = fs::read_dir(d.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().contains("confusion_") && p.extension().is_some_and(|e| e == "csv"))
        .expect("confusion csv");
    let (cm, _) = parse_confusion_csv(&fs::read(csv_path).unwrap()).unwrap();
    let mut recount = vec![vec![0u64; 15]; 15];
    for (&y, &p) in data.train.labels.iter().zip(&predicted) {
        recount[y][p] += 1;
    }
    assert_eq!(cm.counts, recount);
}

#[test]
fn predict_handles_empty_and_bad_input() {
    let d = tempfile::tempdir().unwrap();
    let config = write_config(d.path(), SMALL);
    let split = small_split(d.path(), &config);
    let model = small_model(d.path(), &config, &split);
    let raw = raw_fixture(d.path(), &config);

    let empty = d.path().join("empty.csv");
    feature_only_csv(&raw, &empty, None);
    let out = ok(&["predict", "--model", s(&model), "--data", s(&empty)]);
    assert_eq!(out.trim_end(), "row_index,class_name,probability");

    let text = fs::read_to_string(&raw).unwrap();
    let mut lines: Vec<String> = text.lines().take(5).map(String::from).collect();
    let num_col = lines[0].split(',').position(|h| h == "num_0").unwrap();
    let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
    cells[num_col] = "abc".into();
    lines[3] = cells.join(",");
    let bad = d.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let err = fails(&["predict", "--model", s(&model), "--data", s(&bad)]);
    assert!(err.contains("row 3") && err.contains("num_0"), "{err}");

    let extra = d.path().join("extra.csv");
    let shifted: Vec<String> = text
        .lines()
        .take(3)
        .enumerate()
        .map(|(i, l)| if i == 0 { l.replace("num_1", "surprise") } else { l.to_string() })
        .collect();
    fs::write(&extra, shifted.join("\n") + "\n").unwrap();
    let err = fails(&["predict", "--model", s(&model), "--data", s(&extra)]);
    assert!(err.contains("missing: [num_1]") && err.contains("extra: [surprise]"), "{err}");
}

#[test]
fn compare_tabulates_both_models() {
    let d = tempfile::tempdir().unwrap();
    let config = write_config(d.path(), SMALL);
    let split = small_split(d.path(), &config);
    let out = d.path().join("cmp");
    let table = ok(&["compare", "--config", s(&config), "--seed", "3", "--data", s(&split), "--out", s(&out)]);
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("Model"), "{table}");
    assert!(lines[1].starts_with("1D CNN") && lines[2].starts_with("TCN"), "{table}");
    assert_eq!(fs::read_to_string(out.join("comparison.txt")).unwrap(), table);
    assert!(out.join("comparison.csv").exists());
}

#[test]
fn unknown_model_kind_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let config = write_config(d.path(), SMALL);
    let split = small_split(d.path(), &config);
    let err = fails(&["train", "--seed", "3", "--data", s(&split), "--model", "lstm", "--out", s(d.path())]);
    assert!(err.contains("lstm"), "{err}");
}
