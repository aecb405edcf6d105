//! Binary checkpoint: magic line, JSON header line, little-endian f64 payload.
//!
//! ```text
//! YATT1\n
//! {"format_version":1,"kind":"attention",...,"checksum":"<sha256 hex>"}\n
//! <param_count × 8 bytes>
//! ```
//!
//! Tensors follow [`ModelWeights::tensors`] order. The checksum covers the
//! payload only; the header is validated by parsing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{count_params, ModelConfig, ModelKind, ModelWeights};
use crate::error::{Error, Result};
use crate::pipeline::Scaler;

pub const MAGIC: &[u8] = b"YATT1\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("checkpoint holds a {found} model, expected {expected}")]
    KindMismatch { expected: ModelKind, found: ModelKind },
    #[error("bad checkpoint header: {0}")]
    Header(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    kind: ModelKind,
    config: ModelConfig,
    scaler: Scaler,
    seed: u64,
    param_count: usize,
    payload_bytes: usize,
    checksum: String,
}

/// A restored model with everything needed to predict in bu/acre.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub scaler: Scaler,
    pub seed: u64,
    pub weights: ModelWeights,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_bytes(weights: &ModelWeights, cfg: &ModelConfig, scaler: &Scaler) -> Result<Vec<u8>> {
    weights.matches(cfg)?;
    let mut payload = Vec::with_capacity(weights.param_count() * 8);
    for t in weights.tensors() {
        for v in t {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: cfg.kind,
        config: cfg.clone(),
        scaler: scaler.clone(),
        seed: cfg.seed,
        param_count: weights.param_count(),
        payload_bytes: payload.len(),
        checksum: sha256_hex(&payload),
    };
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(serde_json::to_string(&header)?.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parses a checkpoint, optionally insisting on a model kind.
pub fn from_bytes(bytes: &[u8], expected_kind: Option<ModelKind>) -> Result<Checkpoint> {
    let rest = bytes.strip_prefix(MAGIC).ok_or(CheckpointError::BadMagic)?;
    let newline = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CheckpointError::Header("header line is not terminated".into()))?;
    let text = std::str::from_utf8(&rest[..newline]).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let version = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let header: Header = serde_json::from_value(value).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if let Some(expected) = expected_kind {
        if expected != header.kind {
            return Err(CheckpointError::KindMismatch {
                expected,
                found: header.kind,
            }
            .into());
        }
    }

    let payload = &rest[newline + 1..];
    if payload.len() < header.payload_bytes {
        return Err(CheckpointError::Truncated {
            expected: header.payload_bytes,
            found: payload.len(),
        }
        .into());
    }
    if payload.len() > header.payload_bytes {
        return Err(CheckpointError::Header(format!("{} trailing bytes after payload", payload.len() - header.payload_bytes)).into());
    }
    if sha256_hex(payload) != header.checksum {
        return Err(CheckpointError::ChecksumMismatch.into());
    }

    let cfg = header.config;
    if cfg.kind != header.kind {
        return Err(CheckpointError::Header("kind field disagrees with the stored config".into()).into());
    }
    cfg.validate()?;
    let count = count_params(&cfg);
    if count != header.param_count || count * 8 != header.payload_bytes {
        return Err(CheckpointError::Header(format!(
            "config implies {count} parameters, header records {} ({} bytes)",
            header.param_count, header.payload_bytes
        ))
        .into());
    }
    let mut weights = ModelWeights::zeros(&cfg);
    let mut chunks = payload.chunks_exact(8);
    for t in weights.tensors_mut() {
        for (v, c) in t.iter_mut().zip(&mut chunks) {
            *v = f64::from_le_bytes(c.try_into().expect("chunk of 8"));
        }
    }
    Ok(Checkpoint {
        config: cfg,
        scaler: header.scaler,
        seed: header.seed,
        weights,
    })
}

pub fn save(path: impl AsRef<Path>, weights: &ModelWeights, cfg: &ModelConfig, scaler: &Scaler) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(weights, cfg, scaler)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>, expected_kind: Option<ModelKind>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, expected_kind)
}
