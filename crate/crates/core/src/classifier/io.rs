//! Model file format.
//!
//! ```text
//! "LIQM" | version: u16 LE | header_len: u32 LE | JSON header | f32 LE tensors
//! ```
//!
//! The header records the configuration, normalization statistics, class
//! table, feature geometry and the name and shape of every tensor; tensor
//! data follows in the header's order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelBundle, ModelConfig};
use crate::error::{format_err, Error, Result};
use crate::preprocessor::{check_class_map, ClassEntry, DatasetSpec, NormStats};

pub const MODEL_MAGIC: &[u8; 4] = b"LIQM";
pub const MODEL_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    norm_stats: NormStats,
    class_map: Vec<ClassEntry>,
    features: DatasetSpec,
    tensors: Vec<TensorEntry>,
}

pub fn encode_model(model: &ModelBundle) -> Result<Vec<u8>> {
    let tensors = model.network.tensors();
    let header = Header {
        config: model.config.clone(),
        norm_stats: model.norm_stats,
        class_map: model.class_map.clone(),
        features: model.features,
        tensors: tensors
            .iter()
            .map(|(name, shape, _)| TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| format_err!("model header: {e}"))?;
    let payload: usize = tensors.iter().map(|t| t.2.len() * 4).sum();
    let mut out = Vec::with_capacity(10 + json.len() + payload);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, data) in tensors {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelBundle> {
    if bytes.len() < 10 {
        return Err(format_err!("model file truncated: {} bytes", bytes.len()));
    }
    if &bytes[..4] != MODEL_MAGIC {
        return Err(format_err!("not a model file (bad magic {:?})", &bytes[..4]));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MODEL_VERSION {
        return Err(format_err!(
            "unsupported model version: expected {MODEL_VERSION}, found {version}"
        ));
    }
    let header_len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let body = &bytes[10..];
    if body.len() < header_len {
        return Err(format_err!("model file truncated inside header"));
    }
    let header: Header = serde_json::from_slice(&body[..header_len])
        .map_err(|e| format_err!("model header: {e}"))?;
    check_class_map(&header.class_map)?;
    header.config.validate().map_err(|e| format_err!("model header: {e}"))?;

    let mut model = ModelBundle::init(header.config, header.features)
        .map_err(|e| format_err!("model header: {e}"))?;
    model.norm_stats = header.norm_stats;
    model.class_map = header.class_map;

    let expected: Vec<(String, Vec<usize>)> = model
        .network
        .tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    if expected.len() != header.tensors.len()
        || expected
            .iter()
            .zip(&header.tensors)
            .any(|((n, s), t)| *n != t.name || *s != t.shape)
    {
        return Err(Error::Format(
            "tensor table does not match the architecture in the header".into(),
        ));
    }

    let mut data = &body[header_len..];
    for (slot, (name, _)) in model.network.tensors_mut().into_iter().zip(&expected) {
        let need = slot.len() * 4;
        if data.len() < need {
            return Err(format_err!("model file truncated in tensor {name}"));
        }
        for (v, b) in slot.iter_mut().zip(data[..need].chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(format_err!("non-finite value in tensor {name}"));
            }
        }
        data = &data[need..];
    }
    if !data.is_empty() {
        return Err(format_err!("{} trailing bytes after model tensors", data.len()));
    }
    Ok(model)
}

pub fn save_model(model: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
