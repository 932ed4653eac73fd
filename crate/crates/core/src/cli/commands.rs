//! The work behind each subcommand, callable without the argument parser.

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{DataSource, ModelConfig, PartitionName};
use crate::error::{arg_err, Error, Result, StageExt};
use crate::eval::{classification_report, render_confusion, render_report, ClassificationReport, ConfusionFormat, ReportFormat};
use crate::nn::{load_model, save_model, BuildConfig, Model, ModelKind};
use crate::numerics::{derive_seed, Rng, Tensor};
use crate::optim::{evaluate, train, write_training_log, EpochLog, Evaluation, TrainConfig};
use crate::pipeline::{
    config_hash, generate_fixture, load_csv, prediction_hints, preprocess_records, read_csv, read_sidecar,
    read_split, run_pipeline, sha256_hex, write_split, ClassVocabulary, CleaningReport, DatasetSplit, FixtureConfig,
    Partition, PipelineConfig, SchemaHints, Sidecar, CLEANING_REPORT_FILE, SIDECAR_FILE,
};

pub const MODEL_FILE: &str = "model.tcnm";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const FIXTURE_FILE: &str = "fixture.csv";
pub const FIXTURE_LABELS_FILE: &str = "fixture_labels.csv";

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FixtureOutcome {
    pub csv_path: PathBuf,
    pub labels_path: PathBuf,
    pub class_counts: Vec<(String, usize)>,
    pub sha256: String,
}

fn fixture_csv(config: &FixtureConfig, seed: u64) -> Result<(Vec<u8>, Vec<usize>)> {
    let fixture = generate_fixture(config, &mut Rng::for_stage(seed, "fixture"))?;
    let mut bytes = Vec::new();
    fixture.table.write_csv(&mut bytes)?;
    Ok((bytes, fixture.labels))
}

/// Writes `fixture.csv` (features plus the label column) and
/// `fixture_labels.csv` (row index, class index, class name).
pub fn cmd_fixture(config: &FixtureConfig, seed: u64, out_dir: &Path) -> Result<FixtureOutcome> {
    let (bytes, labels) = fixture_csv(config, seed).stage("fixture")?;
    let vocab = ClassVocabulary::edge_iiot();
    let csv_path = out_dir.join(FIXTURE_FILE);
    let labels_path = out_dir.join(FIXTURE_LABELS_FILE);
    write_file(&csv_path, &bytes).stage("fixture: write")?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row_index", "label", "class_name"])?;
    for (i, &y) in labels.iter().enumerate() {
        w.write_record([i.to_string(), y.to_string(), vocab.name(y).unwrap_or_default().to_string()])?;
    }
    let label_bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_file(&labels_path, &label_bytes).stage("fixture: write")?;
    let class_counts = (0..config.classes)
        .map(|c| (vocab.name(c).unwrap_or_default().to_string(), labels.iter().filter(|&&y| y == c).count()))
        .collect();
    Ok(FixtureOutcome {
        csv_path,
        labels_path,
        class_counts,
        sha256: sha256_hex(&bytes),
    })
}

#[derive(Clone, Debug)]
pub struct PreprocessOutcome {
    pub dir: PathBuf,
    pub split: DatasetSplit,
    pub sidecar: Sidecar,
    pub report: CleaningReport,
}

/// Runs the data pipeline and writes `out/split-<hash>/`.
pub fn cmd_preprocess(source: &DataSource, config: &PipelineConfig, seed: u64, out_dir: &Path) -> Result<PreprocessOutcome> {
    let hints = SchemaHints {
        label_column: Some(config.label_column.clone()),
        ..Default::default()
    };
    let (table, load, dataset_hash) = match source {
        DataSource::Csv(path) => {
            let bytes = fs::read(path)
                .map_err(|e| Error::Ingestion {
                    path: path.clone(),
                    message: e.to_string(),
                })
                .stage("preprocess: ingest")?;
            let hash = sha256_hex(&bytes);
            drop(bytes);
            let (t, l) = load_csv(path, &hints).stage("preprocess: ingest")?;
            (t, l, hash)
        }
        DataSource::Fixture(f) => {
            let (bytes, _) = fixture_csv(f, seed).stage("preprocess: fixture")?;
            let hash = sha256_hex(&bytes);
            let (t, l) = read_csv(Cursor::new(bytes), &hints).stage("preprocess: ingest")?;
            (t, l, hash)
        }
    };
    let out = run_pipeline(&table, &load, &ClassVocabulary::edge_iiot(), config, seed, dataset_hash)
        .stage("preprocess")?;
    let mut sidecar = out.sidecar;
    let id = sha256_hex(format!("{}{}", sidecar.config_hash, sidecar.dataset_hash).as_bytes());
    let dir = out_dir.join(format!("split-{}", short(&id)));
    write_split(&dir, &out.split, &mut sidecar, &out.report).stage("preprocess: write")?;
    Ok(PreprocessOutcome {
        dir,
        split: out.split,
        sidecar,
        report: out.report,
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub model_path: PathBuf,
    pub model: Model,
    pub logs: Vec<EpochLog>,
}

/// Identity of a training run.
#[derive(Serialize)]
struct TrainKey<'a> {
    split_config_hash: &'a str,
    dataset_hash: &'a str,
    build: &'a BuildConfig,
    train: &'a TrainConfig,
    seed: u64,
}

pub(crate) fn build_for(sidecar: &Sidecar, model: &ModelConfig) -> BuildConfig {
    let mut arch = model.arch.clone();
    arch.input_length = sidecar.feature_names.len();
    arch.input_channels = 1;
    arch.num_classes = sidecar.classes.len();
    BuildConfig { kind: model.kind, arch }
}

/// Trains on a persisted split and writes `out/model-<kind>-<hash>/` with the
/// model, the JSON-lines log and a copy of the split's sidecar. When
/// `expected_pipeline` is given its hash must match the one stored at
/// preprocessing time.
pub fn cmd_train(
    split_dir: &Path,
    model: &ModelConfig,
    config: &TrainConfig,
    seed: u64,
    expected_pipeline: Option<&PipelineConfig>,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let (split, sidecar) = read_split(split_dir).stage("train: load split")?;
    if let Some(p) = expected_pipeline {
        let want = config_hash(p, seed);
        if want != sidecar.config_hash {
            return Err(Error::Compatibility(format!(
                "split was produced with config hash {} but this run's pipeline settings hash to {want}",
                short(&sidecar.config_hash)
            )))
            .stage("train: load split");
        }
    }
    let build = build_for(&sidecar, model);
    let key = TrainKey {
        split_config_hash: &sidecar.config_hash,
        dataset_hash: &sidecar.dataset_hash,
        build: &build,
        train: config,
        seed,
    };
    let id = sha256_hex(&serde_json::to_vec(&key)?);
    let mut net = Model::from_build(build, derive_seed(seed, "init")).stage("train: build model")?;
    let logs = train(&mut net, &split.train, &split.val, config, &mut Rng::for_stage(seed, "train")).stage("train")?;

    let dir = out_dir.join(format!("model-{}-{}", model.kind.as_str(), short(&id)));
    fs::create_dir_all(&dir)?;
    let model_path = dir.join(MODEL_FILE);
    save_model(&net, &model_path).stage("train: write")?;
    let mut log_bytes = Vec::new();
    write_training_log(&logs, &mut log_bytes)?;
    write_file(&dir.join(TRAIN_LOG_FILE), &log_bytes).stage("train: write")?;
    fs::copy(split_dir.join(SIDECAR_FILE), dir.join(SIDECAR_FILE)).map_err(Error::from).stage("train: write")?;
    Ok(TrainOutcome {
        dir,
        model_path,
        model: net,
        logs,
    })
}

/// A model file, or a directory containing one.
pub fn model_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MODEL_FILE)
    } else {
        path.to_path_buf()
    }
}

fn model_name(model: &Model) -> &'static str {
    model.build_config().map_or("model", |b| b.kind.as_str())
}

fn pick(split: &DatasetSplit, which: PartitionName) -> &Partition {
    match which {
        PartitionName::Train => &split.train,
        PartitionName::Val => &split.val,
        PartitionName::Test => &split.test,
    }
}

fn check_model_matches(model: &Model, sidecar: &Sidecar) -> Result<()> {
    if model.num_classes() != sidecar.classes.len() {
        return Err(Error::Compatibility(format!(
            "model predicts {} classes but the split has {}",
            model.num_classes(),
            sidecar.classes.len()
        )));
    }
    let width = model.spec().input_length * model.spec().input_channels;
    if width != sidecar.feature_names.len() {
        return Err(Error::Compatibility(format!(
            "model expects {width} features but the split has {}",
            sidecar.feature_names.len()
        )));
    }
    Ok(())
}

/// Sidecar stored with a model, when there is one.
fn model_sidecar(model_path: &Path) -> Option<PathBuf> {
    let p = model_path.parent()?.join(SIDECAR_FILE);
    p.exists().then_some(p)
}

#[derive(Clone, Debug)]
pub struct EvaluateOutcome {
    pub evaluation: Evaluation,
    pub report: ClassificationReport,
    pub files: Vec<PathBuf>,
}

/// Inference-mode evaluation on one partition; writes
/// `report_<model>_<data>.{txt,json,csv}` and `confusion_<model>_<data>.{csv,svg}`.
pub fn cmd_evaluate(
    model_path: &Path,
    split_dir: &Path,
    which: PartitionName,
    out_dir: &Path,
    formats: &[ReportFormat],
) -> Result<EvaluateOutcome> {
    let model_path = model_file(model_path);
    let model = load_model(&model_path).stage("evaluate: load model")?;
    let (split, sidecar) = read_split(split_dir).stage("evaluate: load split")?;
    check_model_matches(&model, &sidecar).stage("evaluate")?;
    if let Some(p) = model_sidecar(&model_path) {
        let trained_on = read_sidecar(&p).stage("evaluate: load model")?;
        if trained_on.config_hash != sidecar.config_hash || trained_on.dataset_hash != sidecar.dataset_hash {
            return Err(Error::Compatibility(
                "model was trained on a different split than the one given".into(),
            ))
            .stage("evaluate");
        }
    }
    let part = pick(&split, which);
    let evaluation = evaluate(&model, part).stage("evaluate")?;
    let report = classification_report(&part.labels, &evaluation.predictions, sidecar.classes.names()).stage("evaluate")?;

    let stem = format!("{}_{}", model_name(&model), short(&sidecar.dataset_hash));
    let mut files = Vec::new();
    for &f in formats {
        let path = out_dir.join(format!("report_{stem}.{}", f.extension()));
        write_file(&path, &render_report(&report, f)?).stage("evaluate: write")?;
        files.push(path);
    }
    for (f, ext) in [(ConfusionFormat::Csv, "csv"), (ConfusionFormat::Svg, "svg")] {
        let path = out_dir.join(format!("confusion_{stem}.{ext}"));
        write_file(&path, &render_confusion(&report.confusion, sidecar.classes.names(), f)?).stage("evaluate: write")?;
        files.push(path);
    }
    Ok(EvaluateOutcome {
        evaluation,
        report,
        files,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub row_index: usize,
    pub class_index: usize,
    pub class_name: String,
    pub probability: f64,
}

const PREDICT_BATCH: usize = 256;

/// Preprocesses raw records with the model's stored sidecar and predicts.
pub fn cmd_predict(model_path: &Path, csv_path: &Path) -> Result<Vec<Prediction>> {
    let model_path = model_file(model_path);
    let model = load_model(&model_path).stage("predict: load model")?;
    let sidecar_path = model_sidecar(&model_path)
        .ok_or_else(|| Error::Compatibility(format!("no {SIDECAR_FILE} next to {}", model_path.display())))
        .stage("predict: load model")?;
    let sidecar = read_sidecar(&sidecar_path).stage("predict: load model")?;
    check_model_matches(&model, &sidecar).stage("predict")?;
    let (table, _) = load_csv(csv_path, &prediction_hints(&sidecar)).stage("predict: ingest")?;
    let x = preprocess_records(&sidecar, &table).stage("predict: preprocess")?;
    let (steps, channels) = (model.spec().input_length, model.spec().input_channels);
    let mut out = Vec::with_capacity(x.rows);
    let k = model.num_classes();
    for start in (0..x.rows).step_by(PREDICT_BATCH) {
        let end = (start + PREDICT_BATCH).min(x.rows);
        let batch = Tensor::new(
            vec![end - start, steps, channels],
            x.data[start * x.cols()..end * x.cols()].to_vec(),
        )?;
        let probs = model.predict_proba(&batch).stage("predict")?;
        for (i, row) in probs.data().chunks_exact(k).enumerate() {
            let c = crate::nn::argmax(row);
            out.push(Prediction {
                row_index: start + i,
                class_index: c,
                class_name: sidecar.classes.name(c).unwrap_or_default().to_string(),
                probability: row[c],
            });
        }
    }
    Ok(out)
}

pub fn write_predictions(predictions: &[Prediction], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row_index", "class_name", "probability"])?;
    for p in predictions {
        w.write_record([p.row_index.to_string(), p.class_name.clone(), p.probability.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    pub test_accuracy: f64,
    pub test_loss: f64,
}

/// `Model / Test Accuracy / Test Loss`, four decimals.
pub fn render_comparison(rows: &[ComparisonRow]) -> String {
    let width = rows.iter().map(|r| r.model.len()).chain(["Model".len()]).max().unwrap_or(0) + 2;
    let mut s = format!("{:<width$}{:<16}{}\n", "Model", "Test Accuracy", "Test Loss");
    for r in rows {
        s.push_str(&format!("{:<width$}{:<16.4}{:.4}\n", r.model, r.test_accuracy, r.test_loss));
    }
    s
}

#[derive(Clone, Debug)]
pub struct CompareOutcome {
    pub rows: Vec<ComparisonRow>,
    pub table: String,
    pub runs: Vec<TrainOutcome>,
}

/// Trains every model kind on the same split and tabulates test metrics.
pub fn cmd_compare(
    split_dir: &Path,
    kinds: &[ModelKind],
    model: &ModelConfig,
    config: &TrainConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<CompareOutcome> {
    if kinds.is_empty() {
        return Err(arg_err("nothing to compare"));
    }
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &kind in kinds {
        let m = ModelConfig {
            kind,
            arch: model.arch.clone(),
        };
        let run = cmd_train(split_dir, &m, config, seed, None, out_dir)?;
        let ev = cmd_evaluate(&run.model_path, split_dir, PartitionName::Test, &run.dir, &ReportFormat::ALL)?;
        rows.push(ComparisonRow {
            model: kind.display_name().to_string(),
            test_accuracy: ev.evaluation.accuracy,
            test_loss: ev.evaluation.loss,
        });
        runs.push(run);
    }
    let table = render_comparison(&rows);
    write_file(&out_dir.join("comparison.txt"), table.as_bytes()).stage("compare: write")?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "test_accuracy", "test_loss"])?;
    for r in &rows {
        w.write_record([r.model.clone(), r.test_accuracy.to_string(), r.test_loss.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_file(&out_dir.join("comparison.csv"), &bytes).stage("compare: write")?;
    Ok(CompareOutcome { rows, table, runs })
}

/// Reads the cleaning report stored with a split.
pub fn read_cleaning_report(split_dir: &Path) -> Result<CleaningReport> {
    Ok(serde_json::from_slice(&fs::read(split_dir.join(CLEANING_REPORT_FILE))?)?)
}
