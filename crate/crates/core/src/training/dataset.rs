//! Dataset file: `u64` sample count and `u32` beta, then per sample `beta`
//! `f32` trace values, a `u8` label, an `f32` weight and three `u32`
//! provenance indices `(e, r, i)`. All little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub trace: Vec<f32>,
    pub label: u8,
    pub weight: f32,
    /// Instance, round and variable index.
    pub provenance: [u32; 3],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub beta: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.len() * (4 * self.beta + 17));
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.beta as u32).to_le_bytes());
        for s in &self.samples {
            for v in &s.trace {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.push(s.label);
            out.extend_from_slice(&s.weight.to_le_bytes());
            for p in s.provenance {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::parse("dataset header", "file shorter than 12 bytes"));
        }
        let count = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        let beta = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let record = 4 * beta + 1 + 4 + 12;
        let body = &bytes[12..];
        if body.len() as u64 != count.saturating_mul(record as u64) {
            return Err(Error::parse(
                "dataset header.count",
                format!("{count} samples of {record} bytes do not match a {}-byte body", body.len()),
            ));
        }
        let f32_at = |b: &[u8], k: usize| f32::from_le_bytes(b[k..k + 4].try_into().expect("4 bytes"));
        let u32_at = |b: &[u8], k: usize| u32::from_le_bytes(b[k..k + 4].try_into().expect("4 bytes"));
        let mut samples = Vec::with_capacity(count as usize);
        for (k, rec) in body.chunks_exact(record).enumerate() {
            let trace = (0..beta).map(|j| f32_at(rec, 4 * j)).collect();
            let label = rec[4 * beta];
            if label > 1 {
                return Err(Error::parse(format!("samples[{k}].label"), format!("expected 0 or 1, got {label}")));
            }
            let base = 4 * beta + 5;
            samples.push(Sample {
                trace,
                label,
                weight: f32_at(rec, 4 * beta + 1),
                provenance: [u32_at(rec, base), u32_at(rec, base + 4), u32_at(rec, base + 8)],
            });
        }
        Ok(Dataset { beta, samples })
    }
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_bytes(&bytes)
}
