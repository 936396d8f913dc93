//! Weight file: `GSTR` magic, u16 version, u32 header length, JSON header,
//! then every parameter tensor as little-endian f32 in declaration order.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ArchitectureConfig, CnnModel, ModelError, Network};
use crate::landmark::GestureClass;

pub const MAGIC: &[u8; 4] = b"GSTR";
pub const FORMAT_VERSION: u16 = 1;

/// Input convention the weights were trained under: joint min-max scaling
/// of the whole matrix onto [0, 255], no further rescaling.
pub const NORMALIZATION_TAG: &str = "minmax_0_255";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight format version {0} (expected {FORMAT_VERSION})")]
    Version(u16),
    #[error("corrupt weight file: {0}")]
    Corrupt(String),
    #[error("class order mismatch: file has {found:?}")]
    ClassOrder { found: Vec<String> },
    #[error("unsupported input normalization {0:?}")]
    Normalization(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: ArchitectureConfig,
    class_order: Vec<String>,
    normalization: String,
    seed: u64,
}

pub fn write_weights<W: Write>(model: &CnnModel, mut out: W) -> io::Result<()> {
    let header = Header {
        architecture: model.config().clone(),
        class_order: GestureClass::names().into_iter().map(String::from).collect(),
        normalization: NORMALIZATION_TAG.to_string(),
        seed: model.seed(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(model.param_count() * 4);
    for tensor in model.params() {
        for v in tensor {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
}

pub fn save_weights(model: &CnnModel, path: &Path) -> Result<(), WeightsError> {
    let mut bytes = Vec::new();
    write_weights(model, &mut bytes).expect("writing to a Vec cannot fail");
    fs::write(path, bytes).map_err(|source| WeightsError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_weights(bytes: &[u8]) -> Result<CnnModel, WeightsError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let fixed = bytes
        .get(4..10)
        .ok_or_else(|| WeightsError::Corrupt("truncated preamble".into()))?;
    let version = u16::from_le_bytes([fixed[0], fixed[1]]);
    if version != FORMAT_VERSION {
        return Err(WeightsError::Version(version));
    }
    let header_len = u32::from_le_bytes([fixed[2], fixed[3], fixed[4], fixed[5]]) as usize;
    let header_bytes = bytes
        .get(10..10 + header_len)
        .ok_or_else(|| WeightsError::Corrupt("truncated header".into()))?;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| WeightsError::Corrupt(format!("header: {e}")))?;

    let expected: Vec<&str> = GestureClass::names();
    if header.class_order != expected {
        return Err(WeightsError::ClassOrder {
            found: header.class_order,
        });
    }
    if header.normalization != NORMALIZATION_TAG {
        return Err(WeightsError::Normalization(header.normalization));
    }

    let layout = header.architecture.layout()?;
    let data = &bytes[10 + header_len..];
    let needed: usize = layout.params.iter().map(|p| p.len() * 4).sum();
    if data.len() != needed {
        return Err(WeightsError::Corrupt(format!(
            "architecture needs {needed} tensor bytes, file has {}",
            data.len()
        )));
    }
    let mut offset = 0;
    let mut params = Vec::with_capacity(layout.params.len());
    for spec in &layout.params {
        let n = spec.len();
        let tensor: Vec<f32> = data[offset..offset + 4 * n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if tensor.iter().any(|v| !v.is_finite()) {
            return Err(WeightsError::Corrupt(format!("non-finite value in {}", spec.name)));
        }
        offset += 4 * n;
        params.push(tensor);
    }
    Ok(Network::from_parts(header.architecture, header.seed, params)?)
}

pub fn load_weights(path: &Path) -> Result<CnnModel, WeightsError> {
    let bytes = fs::read(path).map_err(|source| WeightsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_weights(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::ConvSpec;

    fn small() -> CnnModel {
        let config = ArchitectureConfig {
            conv_layers: vec![ConvSpec::new(3, true), ConvSpec::new(4, false)],
            dense_hidden: 5,
            ..ArchitectureConfig::default()
        };
        Network::init(config, 11).unwrap()
    }

    fn bytes(model: &CnnModel) -> Vec<u8> {
        let mut out = Vec::new();
        write_weights(model, &mut out).unwrap();
        out
    }

    #[test]
    fn round_trip_is_exact() {
        let model = small();
        let encoded = bytes(&model);
        let back = read_weights(&encoded).unwrap();
        assert_eq!(back, model);
        assert_eq!(bytes(&back), encoded);
    }

    #[test]
    fn truncation_is_corruption() {
        let encoded = bytes(&small());
        for cut in [encoded.len() - 1, encoded.len() - 400, 12, 8] {
            let err = read_weights(&encoded[..cut]).unwrap_err();
            assert!(matches!(err, WeightsError::Corrupt(_)), "cut {cut}: {err}");
        }
        let mut extra = encoded.clone();
        extra.push(0);
        assert!(matches!(read_weights(&extra), Err(WeightsError::Corrupt(_))));
    }

    #[test]
    fn magic_and_version_are_checked() {
        let mut encoded = bytes(&small());
        encoded[4] = 9;
        assert!(matches!(read_weights(&encoded), Err(WeightsError::Version(9))));
        encoded[0] = b'X';
        assert!(matches!(read_weights(&encoded), Err(WeightsError::BadMagic)));
    }
}
