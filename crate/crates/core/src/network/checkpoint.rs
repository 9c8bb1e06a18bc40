//! Binary checkpoint: a 16-byte tag (`HSSNB-CKPT\0\0` + u32 LE version),
//! a u64 LE header length, the JSON header, then every parameter as f64 LE
//! in declaration order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{build_model, ArchConfig, HssnbModel};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MAGIC: &[u8; 12] = b"HSSNB-CKPT\0\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: ArchConfig,
    pub seed: u64,
    pub epoch: usize,
    pub train: Option<TrainConfig>,
    pub tensors: Vec<TensorEntry>,
}

impl CheckpointHeader {
    pub fn new(model: &HssnbModel, seed: u64, epoch: usize, train: Option<&TrainConfig>) -> Self {
        let tensors = model
            .parameter_names()
            .into_iter()
            .zip(model.parameters())
            .map(|(name, t)| TensorEntry {
                name,
                shape: t.shape().to_vec(),
            })
            .collect();
        CheckpointHeader {
            arch: model.arch().clone(),
            seed,
            epoch,
            train: train.cloned(),
            tensors,
        }
    }
}

pub fn encode_checkpoint(model: &HssnbModel, header: &CheckpointHeader) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(24 + json.len() + 8 * model.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.parameters() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(HssnbModel, CheckpointHeader)> {
    let bad = |msg: String| Error::Checkpoint(msg);
    if bytes.len() < 24 || &bytes[..12] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(24..24usize.saturating_add(len))
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| bad(format!("malformed header: {e}")))?;

    let mut model = build_model(&header.arch, &mut Rng::new(0))?;
    let expected = CheckpointHeader::new(&model, header.seed, header.epoch, None).tensors;
    if expected != header.tensors {
        return Err(bad("tensor table does not match the architecture".into()));
    }
    let mut data = &bytes[24 + len..];
    if data.len() != 8 * model.parameter_count() {
        return Err(bad(format!(
            "expected {} parameter bytes, found {}",
            8 * model.parameter_count(),
            data.len()
        )));
    }
    for t in model.parameters_mut() {
        for v in t.data_mut() {
            let (head, rest) = data.split_at(8);
            *v = f64::from_le_bytes(head.try_into().expect("8 bytes"));
            data = rest;
        }
    }
    Ok((model, header))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &HssnbModel,
    seed: u64,
    epoch: usize,
    train: Option<&TrainConfig>,
) -> Result<()> {
    let path = path.as_ref();
    let header = CheckpointHeader::new(model, seed, epoch, train);
    fs::write(path, encode_checkpoint(model, &header)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(HssnbModel, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
