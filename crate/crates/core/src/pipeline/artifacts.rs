//! On-disk split matrices and the JSON sidecar describing how they were made.
//!
//! A matrix file is `TNSM`, a little-endian `u32` version, `u64` rows, `u64`
//! columns, then row-major little-endian `f64` values. Split files store the
//! features followed by two bookkeeping columns: the class index and the row's
//! index in the cleaned table.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::chi2::ChiSquaredRanking;
use super::encode::EncodingMap;
use super::scaler::ScalerParams;
use super::split::Partition;
use super::vocab::ClassVocabulary;
use super::{CleaningReport, DatasetSplit, PipelineConfig};
use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"TNSM";
pub const MATRIX_VERSION: u32 = 1;
pub const SIDECAR_VERSION: u32 = 1;
pub const SIDECAR_FILE: &str = "sidecar.json";
pub const CLEANING_REPORT_FILE: &str = "cleaning_report.json";
pub const PARTITIONS: [&str; 3] = ["train", "val", "test"];

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_matrix(rows: usize, cols: usize, data: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + data.len() * 8);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Returns `(rows, cols, data)`.
pub fn read_matrix(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < 24 || &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::Corrupt("not a split matrix file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != MATRIX_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MATRIX_VERSION,
        });
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let body = &bytes[24..];
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(8)) != Some(body.len()) {
        return Err(Error::Corrupt(format!(
            "matrix header says {rows}x{cols} but holds {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((rows, cols, data))
}

fn partition_bytes(p: &Partition) -> Vec<u8> {
    let width = p.cols + 2;
    let mut data = Vec::with_capacity(p.rows * width);
    for r in 0..p.rows {
        data.extend_from_slice(p.row(r));
        data.push(p.labels[r] as f64);
        data.push(p.origin_rows[r] as f64);
    }
    write_matrix(p.rows, width, &data)
}

fn as_index(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
        Ok(v as usize)
    } else {
        Err(Error::Corrupt(format!("{what} {v} is not an index")))
    }
}

fn partition_from_bytes(bytes: &[u8], features: usize) -> Result<Partition> {
    let (rows, cols, data) = read_matrix(bytes)?;
    if cols != features + 2 {
        return Err(Error::Compatibility(format!(
            "matrix has {cols} columns, sidecar implies {}",
            features + 2
        )));
    }
    let mut feats = Vec::with_capacity(rows * features);
    let mut labels = Vec::with_capacity(rows);
    let mut origin = Vec::with_capacity(rows);
    for row in data.chunks_exact(cols.max(1)).take(rows) {
        feats.extend_from_slice(&row[..features]);
        labels.push(as_index(row[features], "label")?);
        origin.push(as_index(row[features + 1], "origin row")?);
    }
    Partition::new(rows, features, feats, labels, origin)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Everything needed to interpret the split files and to preprocess new
/// records the same way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: String,
    pub pipeline: PipelineConfig,
    pub classes: ClassVocabulary,
    /// Raw columns the encoder consumes, in order.
    pub input_columns: Vec<String>,
    /// Raw columns that are accepted and ignored when preprocessing new data.
    pub ignored_columns: Vec<String>,
    pub encoding: EncodingMap,
    pub chi2_ranking: ChiSquaredRanking,
    pub feature_names: Vec<String>,
    pub scaler: ScalerParams,
    pub rows: RowCounts,
    /// SHA-256 of each matrix file.
    pub files: BTreeMap<String, String>,
}

/// Hash identifying a pipeline configuration and seed.
pub fn config_hash(config: &PipelineConfig, seed: u64) -> String {
    #[derive(Serialize)]
    struct Keyed<'a> {
        pipeline: &'a PipelineConfig,
        seed: u64,
    }
    let json = serde_json::to_vec(&Keyed { pipeline: config, seed }).expect("serializable");
    sha256_hex(&json)
}

/// Writes `train.bin`, `val.bin`, `test.bin`, the sidecar and the cleaning
/// report into `dir`. Fills in the sidecar's file hashes.
pub fn write_split(dir: &Path, split: &DatasetSplit, sidecar: &mut Sidecar, report: &CleaningReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    sidecar.files.clear();
    for (name, part) in PARTITIONS.iter().zip([&split.train, &split.val, &split.test]) {
        let bytes = partition_bytes(part);
        sidecar.files.insert(format!("{name}.bin"), sha256_hex(&bytes));
        fs::write(dir.join(format!("{name}.bin")), bytes)?;
    }
    fs::write(dir.join(SIDECAR_FILE), serde_json::to_vec_pretty(sidecar)?)?;
    fs::write(dir.join(CLEANING_REPORT_FILE), serde_json::to_vec_pretty(report)?)?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let bytes = fs::read(path)?;
    #[derive(Deserialize)]
    struct Probe {
        format_version: u32,
    }
    let probe: Probe = serde_json::from_slice(&bytes)?;
    if probe.format_version != SIDECAR_VERSION {
        return Err(Error::Version {
            found: probe.format_version,
            expected: SIDECAR_VERSION,
        });
    }
    let sidecar: Sidecar = serde_json::from_slice(&bytes)?;
    let expected = config_hash(&sidecar.pipeline, sidecar.seed);
    if sidecar.config_hash != expected {
        return Err(Error::Compatibility(format!(
            "sidecar config hash {} does not match its recorded pipeline settings ({expected})",
            sidecar.config_hash
        )));
    }
    Ok(sidecar)
}

/// Loads a split directory, checking file hashes against the sidecar.
pub fn read_split(dir: &Path) -> Result<(DatasetSplit, Sidecar)> {
    let sidecar = read_sidecar(&dir.join(SIDECAR_FILE))?;
    let width = sidecar.feature_names.len();
    let mut parts = Vec::with_capacity(3);
    for name in PARTITIONS {
        let file = format!("{name}.bin");
        let bytes = fs::read(dir.join(&file))?;
        if sidecar.files.get(&file) != Some(&sha256_hex(&bytes)) {
            return Err(Error::Compatibility(format!("{file} does not match the sidecar's recorded hash")));
        }
        parts.push(partition_from_bytes(&bytes, width)?);
    }
    let test = parts.pop().expect("three partitions");
    let val = parts.pop().expect("three partitions");
    let train = parts.pop().expect("three partitions");
    Ok((
        DatasetSplit {
            feature_names: sidecar.feature_names.clone(),
            train,
            val,
            test,
        },
        sidecar,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let data = vec![1.0, -2.5, 3.25, f64::MIN_POSITIVE, 0.0, 7.0];
        let bytes = write_matrix(2, 3, &data);
        assert_eq!(&bytes[..4], b"TNSM");
        assert_eq!(read_matrix(&bytes).unwrap(), (2, 3, data));
    }

    #[test]
    fn matrix_errors() {
        let mut bytes = write_matrix(1, 2, &[1.0, 2.0]);
        assert!(matches!(read_matrix(&bytes[..30]), Err(Error::Corrupt(_))));
        assert!(matches!(read_matrix(b"nope"), Err(Error::Corrupt(_))));
        bytes[4] = 2;
        assert!(matches!(read_matrix(&bytes), Err(Error::Version { found: 2, .. })));
    }

    #[test]
    fn partition_round_trip() {
        let p = Partition::new(2, 2, vec![0.5, 1.5, -1.0, 2.0], vec![3, 0], vec![10, 4]).unwrap();
        assert_eq!(partition_from_bytes(&partition_bytes(&p), 2).unwrap(), p);
        assert!(matches!(
            partition_from_bytes(&partition_bytes(&p), 3),
            Err(Error::Compatibility(_))
        ));
    }

    #[test]
    fn config_hash_tracks_settings() {
        let base = PipelineConfig::default();
        let h = config_hash(&base, 1);
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash(&base, 1));
        assert_ne!(h, config_hash(&base, 2));
        let other = PipelineConfig {
            fraction: 0.5,
            ..base
        };
        assert_ne!(h, config_hash(&other, 1));
    }
}
