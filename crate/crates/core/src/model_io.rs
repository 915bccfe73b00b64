//! Versioned binary model file.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | content                                             |
//! |--------------|-----------------------------------------------------|
//! | 4            | magic `IDS1`                                        |
//! | 4            | format version, `u32` (currently 1)                 |
//! | 8            | metadata length `M`, `u64`                          |
//! | M            | metadata, UTF-8 JSON ([`ModelMetadata`])            |
//! | 4            | tensor count `N`, `u32`                             |
//! | per tensor   | rank `u32`, then `rank` extents as `u64`            |
//! | payload      | every tensor's elements as `f32`, declared order    |
//! | 8            | FNV-1a 64 checksum of all preceding bytes, `u64`    |
//!
//! Tensors appear in layer order: for each conv stage its kernels
//! `[out × in × k]` then bias, then hidden weights `[units × flat]`, hidden
//! bias, output weights `[K × units]`, output bias.

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::nn::{Architecture, ModelParams};
use crate::pipeline::EncodingMeta;
use crate::tensor::Tensor;
use crate::trainer::TrainConfig;

pub const MAGIC: &[u8; 4] = b"IDS1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub architecture: Architecture,
    pub feature_count: usize,
    pub num_classes: usize,
    pub label_names: Vec<String>,
    /// Present when the model can consume raw cleaned rows.
    pub encoding: Option<EncodingMeta>,
    pub seed: Option<u64>,
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub loss_history: Vec<LossRecord>,
}

impl ModelMetadata {
    pub fn for_params(params: &ModelParams) -> Self {
        let arch = params.architecture().clone();
        Self {
            feature_count: arch.input_len,
            num_classes: arch.num_classes,
            label_names: (0..arch.num_classes).map(|i| i.to_string()).collect(),
            architecture: arch,
            encoding: None,
            seed: None,
            train_config: None,
            loss_history: Vec::new(),
        }
    }

    pub fn with_encoding(mut self, encoding: EncodingMeta) -> Self {
        self.label_names = encoding.label_names.clone();
        self.encoding = Some(encoding);
        self
    }

    fn validate(&self) -> std::result::Result<(), FormatError> {
        let a = &self.architecture;
        if a.input_len != self.feature_count || a.num_classes != self.num_classes {
            return Err(FormatError::Metadata(
                "feature/class counts disagree with architecture".into(),
            ));
        }
        if self.label_names.len() != self.num_classes {
            return Err(FormatError::Metadata(format!(
                "{} label names for {} classes",
                self.label_names.len(),
                self.num_classes
            )));
        }
        if let Some(e) = &self.encoding {
            if e.n_features() != self.feature_count || e.label_names != self.label_names {
                return Err(FormatError::Metadata(
                    "encoding disagrees with model shape".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn encode_model(params: &ModelParams, meta: &ModelMetadata) -> Result<Vec<u8>> {
    if meta.architecture != *params.architecture() {
        return Err(Error::shape(
            "metadata architecture differs from parameters",
        ));
    }
    meta.validate()?;
    let json = serde_json::to_vec(meta).map_err(|e| FormatError::Metadata(e.to_string()))?;
    let tensors = params.tensors();
    let payload_len: usize = tensors.iter().map(|t| t.len() * 4).sum();
    let mut buf = Vec::with_capacity(32 + json.len() + payload_len);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for t in &tensors {
        for &x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let sum = checksum(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    Ok(buf)
}

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(FormatError::Truncated(what))?;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(FormatError::Truncated(what))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &'static str) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Validates magic, version, structure and checksum before building any
/// tensors.
pub fn decode_model(bytes: &[u8]) -> Result<(ModelParams, ModelMetadata)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic.into());
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let meta_len = usize::try_from(cur.u64("metadata length")?)
        .map_err(|_| FormatError::Truncated("metadata"))?;
    let meta_bytes = cur.take(meta_len, "metadata")?;
    let n_tensors = cur.u32("tensor count")? as usize;
    let mut shapes = Vec::with_capacity(n_tensors.min(1024));
    let mut elements = 0usize;
    for _ in 0..n_tensors {
        let rank = cur.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(cur.u64("tensor extent")? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| FormatError::Metadata("tensor size overflows".into()))?;
        elements = elements
            .checked_add(count)
            .ok_or_else(|| FormatError::Metadata("payload size overflows".into()))?;
        shapes.push(shape);
    }
    let payload_bytes = elements
        .checked_mul(4)
        .ok_or(FormatError::Truncated("payload"))?;
    let payload = cur.take(payload_bytes, "payload")?;
    let body_end = cur.pos;
    let stored = cur.u64("checksum")?;
    if cur.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - cur.pos).into());
    }
    let computed = checksum(&bytes[..body_end]);
    if stored != computed {
        return Err(FormatError::ChecksumMismatch { stored, computed }.into());
    }

    let meta: ModelMetadata =
        serde_json::from_slice(meta_bytes).map_err(|e| FormatError::Metadata(e.to_string()))?;
    meta.validate()?;
    let expected = meta
        .architecture
        .param_shapes()
        .map_err(|e| FormatError::Metadata(e.to_string()))?;
    if expected != shapes {
        return Err(FormatError::Metadata(format!(
            "declared tensor shapes {shapes:?} do not match architecture {expected:?}"
        ))
        .into());
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let tensors = shapes
        .into_iter()
        .map(|shape| {
            let n = shape.iter().product();
            Tensor::new(shape, values.by_ref().take(n).collect())
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| FormatError::Metadata(e.to_string()))?;
    let params = ModelParams::from_tensors(meta.architecture.clone(), tensors)
        .map_err(|e| FormatError::Metadata(e.to_string()))?;
    Ok((params, meta))
}

pub fn write_model(
    params: &ModelParams,
    meta: &ModelMetadata,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(params, meta)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(ModelParams, ModelMetadata)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
