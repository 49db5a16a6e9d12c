//! Self-describing checkpoint container.
//!
//! A checkpoint is a JSON document:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "kind": "<model kind>",
//!   "tensors": [ { "name": "...", "shape": [..], "data": "<base64 of f64 little-endian>" } ],
//!   "adam": null | { "step", "lr_init", "lr_final", "beta1", "beta2", "eps",
//!                    "first_moment": "<base64>", "second_moment": "<base64>" },
//!   "meta": { ... free-form, keys sorted ... }
//! }
//! ```
//!
//! Parameter bytes are stored verbatim, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::params::{ParamSegment, Parameterized};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(with = "f64_b64")]
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    pub tensors: Vec<TensorRecord>,
    pub adam: Option<AdamState>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn from_model<M: Parameterized + ?Sized>(
        kind: &str,
        model: &M,
        adam: Option<AdamState>,
        meta: serde_json::Value,
    ) -> Self {
        let flat = model.flat_params();
        let mut offset = 0;
        let tensors = model
            .param_segments()
            .into_iter()
            .map(|seg| {
                let data = flat[offset..offset + seg.len()].to_vec();
                offset += seg.len();
                TensorRecord {
                    name: seg.name,
                    shape: seg.shape,
                    data,
                }
            })
            .collect();
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: kind.to_string(),
            tensors,
            adam,
            meta,
        }
    }

    pub fn segments(&self) -> Vec<ParamSegment> {
        self.tensors
            .iter()
            .map(|t| ParamSegment::new(t.name.clone(), t.shape.clone()))
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    /// Loads the stored tensors into `model`, which must have the same layout.
    pub fn restore_into<M: Parameterized + ?Sized>(&self, model: &mut M) -> Result<()> {
        let expected = model.param_segments();
        let stored = self.segments();
        if expected != stored {
            let first = expected
                .iter()
                .zip(&stored)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("model has {} {:?}, checkpoint has {} {:?}", a.name, a.shape, b.name, b.shape))
                .unwrap_or_else(|| format!("{} vs {} tensors", expected.len(), stored.len()));
            return Err(Error::Schema(format!("checkpoint layout mismatch: {first}")));
        }
        model.load_flat_params(&self.flat_params())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "checkpoint format version {} is not supported (expected {CHECKPOINT_FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        for t in &ckpt.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Schema(format!(
                    "tensor {} declares shape {:?} but holds {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Serializes `Vec<f64>` as base64 of the little-endian bytes.
pub mod f64_b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn encode(values: &[f64]) -> String {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        STANDARD.encode(bytes)
    }

    pub fn decode(text: &str) -> Result<Vec<f64>, String> {
        let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
        if bytes.len() % 8 != 0 {
            return Err(format!("{} bytes is not a whole number of f64 values", bytes.len()));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(values))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        decode(&text).map_err(serde::de::Error::custom)
    }
}
