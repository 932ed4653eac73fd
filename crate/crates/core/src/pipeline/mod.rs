//! Data preparation: ingestion, cleaning, encoding, chi-squared ranking,
//! stratified reduction and split, standardization, and a synthetic fixture.

mod artifacts;
mod chi2;
mod encode;
mod fixture;
mod scaler;
mod split;
mod table;
mod vocab;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use artifacts::{
    config_hash, read_matrix, read_sidecar, read_split, sha256_hex, write_matrix, write_split, RowCounts, Sidecar,
    CLEANING_REPORT_FILE, MATRIX_MAGIC, MATRIX_VERSION, PARTITIONS, SIDECAR_FILE, SIDECAR_VERSION,
};
pub use chi2::{chi2_rank, select_top_k, ChiSquaredRanking, RankedFeature};
pub use encode::{encode_categoricals, fit_encoding, ColumnEncoding, EncodedMatrix, EncodingMap};
pub use fixture::{generate_fixture, Fixture, FixtureConfig, DEFAULT_LABEL_COLUMN};
pub use scaler::{apply_scaler, fit_scaler, ScalerParams};
pub use split::{largest_remainder, stratified_sample, stratified_split, Partition, SplitIndices};
pub use table::{
    dedup_columns, dedup_rows, drop_columns, load_csv, read_csv, Column, ColumnKind, LoadReport, RawTable,
    SchemaHints,
};
pub use vocab::{ClassVocabulary, EDGE_IIOT_CLASSES, EDGE_IIOT_COUNTS};

use crate::error::{Error, Result, StageExt};
use crate::numerics::Rng;

/// Identifier, payload and redundant fields removed before modelling.
pub const DEFAULT_DROP_COLUMNS: [&str; 15] = [
    "frame.time",
    "ip.src_host",
    "ip.dst_host",
    "arp.src.proto_ipv4",
    "arp.dst.proto_ipv4",
    "http.file_data",
    "http.request.full_uri",
    "http.request.uri.query",
    "tcp.options",
    "tcp.payload",
    "tcp.srcport",
    "udp.port",
    "mqtt.msg",
    "icmp.unused",
    "Attack_label",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub drop_columns: Vec<String>,
    pub label_column: String,
    pub max_categories: usize,
    /// Stratified reduction applied before splitting.
    pub fraction: f64,
    /// Train, validation, test.
    pub split: [f64; 3],
    /// Keep only the best-ranked features; all when unset.
    pub top_k: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            drop_columns: DEFAULT_DROP_COLUMNS.iter().map(|s| s.to_string()).collect(),
            label_column: DEFAULT_LABEL_COLUMN.to_string(),
            max_categories: 24,
            fraction: 0.25,
            split: [0.7, 0.1, 0.2],
            top_k: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub rows_in: usize,
    pub rows_out: usize,
    pub dropped_rows: usize,
    pub dropped_columns: Vec<String>,
    pub imputations: usize,
    pub warnings: Vec<String>,
}

/// Standardized partitions sharing one feature list.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub feature_names: Vec<String>,
    pub train: Partition,
    pub val: Partition,
    pub test: Partition,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub split: DatasetSplit,
    pub sidecar: Sidecar,
    pub report: CleaningReport,
}

fn to_partition(m: &EncodedMatrix, labels: &[usize], rows: &[usize]) -> Result<Partition> {
    Partition::new(
        m.rows,
        m.cols(),
        m.data.clone(),
        rows.iter().map(|&r| labels[r]).collect(),
        rows.to_vec(),
    )
}

/// Runs every preparation stage on an ingested table.
///
/// Order: drop columns, dedup rows, dedup columns, stratified reduction,
/// stratified split, then encoding, chi-squared ranking, selection and
/// scaling, each fitted on the training rows only and applied to all three
/// partitions.
pub fn run_pipeline(
    table: &RawTable,
    load: &LoadReport,
    classes: &ClassVocabulary,
    config: &PipelineConfig,
    seed: u64,
    dataset_hash: String,
) -> Result<PipelineOutput> {
    let mut report = CleaningReport {
        rows_in: load.rows_read.max(table.n_rows()),
        imputations: load.imputations,
        ..Default::default()
    };
    report.dropped_rows = load.unlabeled_rows_dropped;
    if load.unlabeled_rows_dropped > 0 {
        report
            .warnings
            .push(format!("{} rows without a label were dropped", load.unlabeled_rows_dropped));
    }
    for (col, n) in &load.parse_failures {
        report.warnings.push(format!("{n} unparseable values in `{col}` imputed to 0"));
    }
    if table.column(&config.label_column).is_none() {
        return Err(Error::MissingLabelColumn(config.label_column.clone())).stage("ingest");
    }

    let drop: Vec<String> = config
        .drop_columns
        .iter()
        .filter(|c| **c != config.label_column)
        .cloned()
        .collect();
    let (t, warnings) = drop_columns(table, &drop);
    report.warnings.extend(warnings);
    report
        .dropped_columns
        .extend(drop.iter().filter(|c| table.column(c).is_some()).cloned());

    let (t, removed) = dedup_rows(&t);
    report.dropped_rows += removed;
    let (mut t, dup_cols) = dedup_columns(&t, &[config.label_column.as_str()]);
    report.dropped_columns.extend(dup_cols.iter().cloned());

    let label_col = t.take_column(&config.label_column).expect("checked above");
    let Column::Categorical(names) = label_col else {
        unreachable!("label column is read as text")
    };
    let labels = classes.encode(&names).stage("labels")?;
    let input_columns = t.names().to_vec();

    let reduced = stratified_sample(&labels, config.fraction, &mut Rng::for_stage(seed, "reduce")).stage("reduce")?;
    let reduced_labels: Vec<usize> = reduced.iter().map(|&r| labels[r]).collect();
    let split = stratified_split(&reduced_labels, config.split, &mut Rng::for_stage(seed, "split")).stage("split")?;
    let back = |v: &[usize]| -> Vec<usize> { v.iter().map(|&i| reduced[i]).collect() };
    let split = SplitIndices {
        train: back(&split.train),
        val: back(&split.val),
        test: back(&split.test),
        warnings: split.warnings,
    };
    report.warnings.extend(split.warnings.iter().cloned());
    report.rows_out = split.train.len() + split.val.len() + split.test.len();
    if split.train.is_empty() {
        return Err(crate::error::arg_err("training partition is empty")).stage("split");
    }

    let train_table = t.select_rows(&split.train);
    let encoding = fit_encoding(&train_table, config.max_categories).stage("encode")?;
    let train_enc = encoding.apply(&train_table).stage("encode")?;
    let train_labels: Vec<usize> = split.train.iter().map(|&r| labels[r]).collect();
    let ranking = chi2_rank(&train_enc, &train_labels).stage("chi2")?;
    let feature_names = match config.top_k {
        Some(k) => {
            let (names, warning) = select_top_k(&ranking, k);
            report.warnings.extend(warning);
            names
        }
        None => ranking.names(),
    };
    if feature_names.is_empty() {
        return Err(crate::error::arg_err("no features selected")).stage("select");
    }
    let train_sel = train_enc.select_columns(&feature_names).stage("select")?;
    let scaler = fit_scaler(&train_sel).stage("scale")?;

    let finish = |rows: &[usize]| -> Result<Partition> {
        let enc = encoding.apply(&t.select_rows(rows)).stage("encode")?;
        let sel = enc.select_columns(&feature_names).stage("select")?;
        let scaled = apply_scaler(&scaler, &sel).stage("scale")?;
        to_partition(&scaled, &labels, rows)
    };
    let dataset = DatasetSplit {
        train: to_partition(&apply_scaler(&scaler, &train_sel).stage("scale")?, &labels, &split.train)?,
        val: finish(&split.val)?,
        test: finish(&split.test)?,
        feature_names: feature_names.clone(),
    };

    let mut ignored: BTreeSet<String> = config.drop_columns.iter().cloned().collect();
    ignored.extend(dup_cols);
    ignored.insert(config.label_column.clone());
    let sidecar = Sidecar {
        format_version: SIDECAR_VERSION,
        seed,
        config_hash: config_hash(config, seed),
        dataset_hash,
        pipeline: config.clone(),
        classes: classes.clone(),
        input_columns,
        ignored_columns: ignored.into_iter().collect(),
        encoding,
        chi2_ranking: ranking,
        feature_names,
        scaler,
        rows: RowCounts {
            train: dataset.train.rows,
            val: dataset.val.rows,
            test: dataset.test.rows,
        },
        files: Default::default(),
    };
    Ok(PipelineOutput {
        split: dataset,
        sidecar,
        report,
    })
}

/// Read hints that reproduce the fitted column kinds, rejecting malformed
/// numeric cells.
pub fn prediction_hints(sidecar: &Sidecar) -> SchemaHints {
    SchemaHints {
        label_column: None,
        kinds: sidecar
            .encoding
            .columns
            .iter()
            .map(|c| (c.source().to_string(), c.kind()))
            .collect(),
        strict: true,
    }
}

/// Applies the persisted encoding, selection and scaling to new records.
/// Columns must be exactly the fitted inputs plus any ignored ones.
pub fn preprocess_records(sidecar: &Sidecar, table: &RawTable) -> Result<EncodedMatrix> {
    let present: BTreeSet<&str> = table.names().iter().map(String::as_str).collect();
    let missing: Vec<&str> = sidecar
        .input_columns
        .iter()
        .map(String::as_str)
        .filter(|c| !present.contains(c))
        .collect();
    let known: BTreeSet<&str> = sidecar
        .input_columns
        .iter()
        .chain(&sidecar.ignored_columns)
        .map(String::as_str)
        .collect();
    let extra: Vec<&str> = present.iter().copied().filter(|c| !known.contains(c)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Compatibility(format!(
            "feature columns differ from the training data; missing: [{}]; extra: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    let enc = sidecar.encoding.apply(table)?;
    let sel = enc.select_columns(&sidecar.feature_names)?;
    apply_scaler(&sidecar.scaler, &sel)
}
