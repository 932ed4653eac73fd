//! Model files.
//!
//! Line one is a JSON manifest (format version, spec, init seed, builder
//! overrides, parameter names and shapes). Each following line is
//! `<name>\t<base64>` where the payload is the parameter's little-endian
//! `f64` values in row-major order, one line per parameter in spec order.

use std::fs;
use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::model::Model;
use super::spec::{BuildConfig, ModelSpec};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    spec: ModelSpec,
    rng_seed: u64,
    overrides: Option<BuildConfig>,
    parameters: Vec<ParamEntry>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Serializes a model to bytes.
pub fn write_model(model: &Model) -> Result<Vec<u8>> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec: model.spec().clone(),
        rng_seed: model.init_seed(),
        overrides: model.build_config().cloned(),
        parameters: model
            .parameter_names()
            .into_iter()
            .zip(model.parameters())
            .map(|(name, t)| ParamEntry {
                name,
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec(&manifest)?;
    out.push(b'\n');
    for (entry, tensor) in manifest.parameters.iter().zip(model.parameters()) {
        let bytes: Vec<u8> = tensor.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        writeln!(out, "{}\t{}", entry.name, STANDARD.encode(bytes))?;
    }
    Ok(out)
}

/// Parses bytes produced by [`write_model`].
pub fn read_model(bytes: &[u8]) -> Result<Model> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Corrupt("model file is not UTF-8".into()))?;
    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or_default();
    let probe: VersionProbe =
        serde_json::from_str(header).map_err(|e| Error::Corrupt(format!("unreadable manifest: {e}")))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: probe.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let manifest: Manifest =
        serde_json::from_str(header).map_err(|e| Error::Corrupt(format!("unreadable manifest: {e}")))?;

    let mut model = Model::new(manifest.spec, manifest.rng_seed).map_err(|e| Error::Corrupt(format!("invalid spec: {e}")))?;
    model.set_build_config(manifest.overrides);
    let names = model.parameter_names();
    let expected: Vec<Vec<usize>> = model.parameters().iter().map(|t| t.shape().to_vec()).collect();
    if manifest.parameters.len() != names.len() {
        return Err(Error::Corrupt(format!(
            "manifest lists {} parameters but the model layout needs {}",
            manifest.parameters.len(),
            names.len()
        )));
    }
    let mut values = Vec::with_capacity(names.len());
    for ((entry, name), shape) in manifest.parameters.iter().zip(&names).zip(&expected) {
        if &entry.name != name {
            return Err(Error::Corrupt(format!("expected parameter `{name}`, manifest has `{}`", entry.name)));
        }
        if &entry.shape != shape {
            return Err(Error::Shape {
                name: name.clone(),
                expected: shape.clone(),
                found: entry.shape.clone(),
            });
        }
        let line = lines
            .next()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::Corrupt(format!("payload for `{name}` is missing")))?;
        let (line_name, payload) = line
            .split_once('\t')
            .ok_or_else(|| Error::Corrupt(format!("malformed payload line for `{name}`")))?;
        if line_name != name {
            return Err(Error::Corrupt(format!("payload for `{line_name}` where `{name}` was expected")));
        }
        let raw = STANDARD
            .decode(payload)
            .map_err(|e| Error::Corrupt(format!("bad base64 for `{name}`: {e}")))?;
        let n: usize = shape.iter().product();
        if raw.len() != n * 8 {
            return Err(Error::Corrupt(format!(
                "`{name}` holds {} bytes, expected {}",
                raw.len(),
                n * 8
            )));
        }
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        values.push(Tensor::new(shape.clone(), data).map_err(|e| Error::Corrupt(format!("`{name}`: {e}")))?);
    }
    if lines.any(|l| !l.is_empty()) {
        return Err(Error::Corrupt("trailing data after the last parameter".into()));
    }
    model.set_parameters(values)?;
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_model(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    read_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{ArchConfig, ModelKind};
    use crate::nn::test_support::random_tensor;
    use crate::numerics::Rng;

    fn model() -> Model {
        let build = BuildConfig {
            kind: ModelKind::Tcn,
            arch: ArchConfig {
                input_length: 12,
                channels: 5,
                head_units: 7,
                num_classes: 4,
                ..Default::default()
            },
        };
        Model::from_build(build, 21).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = write_model(&m).unwrap();
        let loaded = read_model(&bytes).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(write_model(&loaded).unwrap(), bytes);
        let x = random_tensor(&mut Rng::new(1), &[5, 12, 1]);
        assert_eq!(loaded.predict(&x).unwrap(), m.predict(&x).unwrap());
        assert_eq!(loaded.logits(&x).unwrap(), m.logits(&x).unwrap());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = write_model(&model()).unwrap();
        for cut in [bytes.len() / 2, bytes.len() - 10, 20] {
            assert!(matches!(read_model(&bytes[..cut]), Err(Error::Corrupt(_))), "cut at {cut}");
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let bytes = write_model(&model()).unwrap();
        let text = String::from_utf8(bytes).unwrap().replacen("\"format_version\":1", "\"format_version\":9", 1);
        assert!(matches!(read_model(text.as_bytes()), Err(Error::Version { found: 9, expected: 1 })));
    }

    #[test]
    fn shape_inconsistency_rejected() {
        let bytes = write_model(&model()).unwrap();
        let text = String::from_utf8(bytes).unwrap().replacen("\"shape\":[3,1,5]", "\"shape\":[3,1,6]", 1);
        assert!(matches!(read_model(text.as_bytes()), Err(Error::Shape { .. })));
    }
}
