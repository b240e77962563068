//! Model file: `u64` little-endian header length, a JSON header, then every
//! tensor as little-endian `f32` in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Mode, PolicyWeights, Scalar};
use super::PolicyConfig;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    config: PolicyConfig,
    mode: Mode,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

impl<F: Scalar> PolicyWeights<F> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.tensors();
        let header = Header {
            format_version: MODEL_FORMAT_VERSION,
            config: self.config().clone(),
            mode: self.mode(),
            tensors: tensors
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(8 + json.len() + 4 * self.parameter_count());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &tensors {
            for v in t.data {
                out.extend_from_slice(&v.to_f32().expect("finite weight").to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::parse("model header", "file shorter than 8 bytes"))?;
        let len = usize::try_from(u64::from_le_bytes(len_bytes))
            .map_err(|_| Error::parse("model header", "length overflows"))?;
        let json = bytes
            .get(8..8usize.saturating_add(len))
            .ok_or_else(|| Error::parse("model header", "truncated"))?;
        let de = &mut serde_json::Deserializer::from_slice(json);
        let header: Header = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::parse(format!("model header.{}", e.path()), e.inner().to_string()))?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::parse(
                "model header.format_version",
                format!("unsupported version {}", header.format_version),
            ));
        }
        let mut weights = PolicyWeights::<F>::zeros(&header.config)
            .map_err(|e| Error::parse("model header.config", e.to_string()))?;
        weights.set_mode(header.mode);
        let mut blob = &bytes[8 + len..];
        {
            let mut tensors = weights.tensors_mut();
            if tensors.len() != header.tensors.len() {
                return Err(Error::parse(
                    "model header.tensors",
                    format!("expected {} tensors, found {}", tensors.len(), header.tensors.len()),
                ));
            }
            for (k, (t, entry)) in tensors.iter_mut().zip(&header.tensors).enumerate() {
                if t.name != entry.name || t.shape != entry.shape {
                    return Err(Error::parse(
                        format!("model header.tensors[{k}]"),
                        format!("expected {} {:?}, found {} {:?}", t.name, t.shape, entry.name, entry.shape),
                    ));
                }
                let need = 4 * t.data.len();
                if blob.len() < need {
                    return Err(Error::parse(format!("tensor {}", t.name), "blob truncated"));
                }
                for (dst, chunk) in t.data.iter_mut().zip(blob[..need].chunks_exact(4)) {
                    let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
                    *dst = F::from_f32(v).expect("f32 converts");
                }
                blob = &blob[need..];
            }
        }
        if !blob.is_empty() {
            return Err(Error::parse("model blob", format!("{} trailing bytes", blob.len())));
        }
        Ok(weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        PolicyWeights::from_bytes(&bytes)
    }
}
