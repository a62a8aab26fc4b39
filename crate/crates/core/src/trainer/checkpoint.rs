//! Versioned checkpoint container.
//!
//! Layout: 8-byte magic, u64 LE header length, JSON header, then every
//! parameter tensor followed by every velocity tensor as little-endian f64
//! in the order listed in the header. The header carries a SHA-256 of the
//! payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelSpec, ModelState, Tensors, TrainConfig};
use crate::autoencoder;
use crate::error::{Error, Result};
use crate::ingest::Scaling;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"NDDOSRCK";

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    epoch: usize,
    input_dim: usize,
    config: TrainConfig,
    model: ModelSpec,
    classes: Vec<String>,
    align_class: Option<usize>,
    scaling: Scaling,
    tensors: Vec<TensorInfo>,
    checksum: String,
}

fn payload(state: &ModelState) -> (Vec<TensorInfo>, Vec<u8>) {
    let mut infos = Vec::new();
    let mut bytes = Vec::new();
    for (prefix, t) in [("", &state.params), ("velocity.", &state.velocity)] {
        for (name, shape, data) in t.named() {
            infos.push(TensorInfo {
                name: format!("{prefix}{name}"),
                shape,
            });
            for v in data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    (infos, bytes)
}

pub fn save_checkpoint(state: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (tensors, body) = payload(state);
    let header = Header {
        format_version: FORMAT_VERSION,
        epoch: state.epoch,
        input_dim: state.input_dim(),
        config: state.config.clone(),
        model: state.model.clone(),
        classes: state.classes.clone(),
        align_class: state.align_class,
        scaling: state.scaling,
        tensors,
        checksum: hex::encode(Sha256::digest(&body)),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&body);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn fill(t: &mut Tensors, infos: &[TensorInfo], prefix: &str, body: &mut &[u8]) -> Result<()> {
    let expected: Vec<(String, Vec<usize>)> = t.named().into_iter().map(|(n, s, _)| (format!("{prefix}{n}"), s)).collect();
    for (slice, (name, shape)) in t.slices_mut().into_iter().zip(expected) {
        let info = infos
            .iter()
            .find(|i| i.name == name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor `{name}`")))?;
        if info.shape != shape {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor `{name}` has shape {:?}, expected {shape:?}",
                info.shape
            )));
        }
        for v in slice.iter_mut() {
            let (head, rest) = body.split_at(8);
            *v = f64::from_le_bytes(head.try_into().expect("8 bytes"));
            *body = rest;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or(Error::Checksum)?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes[16..header_end]).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let found = raw.get("format_version").and_then(serde_json::Value::as_u64).unwrap_or(0) as u32;
    if found != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;

    let body = &bytes[header_end..];
    let count: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if body.len() != count * 8 || hex::encode(Sha256::digest(body)) != header.checksum {
        return Err(Error::Checksum);
    }

    let ae = autoencoder::init_params(&header.model.ae_config(header.input_dim, 0))?;
    let k = header.classes.len();
    let mut params = Tensors {
        ae,
        points: ndarray::Array2::zeros((k, header.model.embedding_dim)),
        margins: ndarray::Array1::zeros(k),
    };
    let mut velocity = params.zeros_like();
    let mut cursor = body;
    fill(&mut params, &header.tensors, "", &mut cursor)?;
    fill(&mut velocity, &header.tensors, "velocity.", &mut cursor)?;
    Ok(ModelState {
        params,
        velocity,
        epoch: header.epoch,
        config: header.config,
        model: header.model,
        classes: header.classes,
        align_class: header.align_class,
        scaling: header.scaling,
    })
}
