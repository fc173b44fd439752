//! On-disk checkpoint format: `XTTS` magic, a version word, one JSON
//! header (config, inventory, speaker map, optimizer, schedule), then
//! name-sorted parameter blocks as little-endian f32.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ModelConfig, ParamStore};
use crate::numcore::Tensor;
use crate::textfront::SymbolInventory;

use super::{LrSchedule, OptimizerState, TrainError};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"XTTS";

/// Complete state of a training run at one step.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub inventory: SymbolInventory,
    /// Speaker name to table-row map; rows cover `0..num_speakers`.
    pub speakers: BTreeMap<String, usize>,
    pub params: ParamStore,
    pub optimizer: Option<OptimizerState>,
    pub step: u64,
    pub schedule: LrSchedule,
}

impl Checkpoint {
    /// The table row for a speaker name, with the known names in the error.
    pub fn speaker_row(&self, name: &str) -> Result<usize, TrainError> {
        self.speakers
            .get(name)
            .copied()
            .ok_or_else(|| TrainError::UnknownSpeaker {
                speaker: name.to_string(),
                known: self.speakers.keys().cloned().collect(),
            })
    }

    /// Fail when the checkpoint was built under a different model config
    /// than the caller expects.
    pub fn ensure_config(&self, expected: &ModelConfig) -> Result<(), TrainError> {
        if &self.config == expected {
            return Ok(());
        }
        let msg = if self.config.encoder_kind != expected.encoder_kind {
            format!(
                "checkpoint encoder is {:?}, run requests {:?}",
                self.config.encoder_kind, expected.encoder_kind
            )
        } else {
            "checkpoint model config differs from the requested one".to_string()
        };
        Err(TrainError::ConfigMismatch { msg })
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    inventory: SymbolInventory,
    speakers: BTreeMap<String, usize>,
    step: u64,
    schedule: LrSchedule,
    optimizer: Option<OptimizerState>,
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serialize a checkpoint. Parameters are stored as f32, so values are
/// rounded once on first save; a load/save cycle is byte-stable.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), TrainError> {
    let header = Header {
        config: ckpt.config.clone(),
        inventory: ckpt.inventory.clone(),
        speakers: ckpt.speakers.clone(),
        step: ckpt.step,
        schedule: ckpt.schedule.clone(),
        optimizer: ckpt.optimizer.clone(),
    };
    let header_json = serde_json::to_string(&header).expect("header serialization cannot fail");

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, CHECKPOINT_VERSION);
    push_u32(&mut out, header_json.len() as u32);
    out.extend_from_slice(header_json.as_bytes());

    push_u32(&mut out, ckpt.params.len() as u32);
    for (name, tensor) in ckpt.params.iter() {
        push_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        push_u32(&mut out, tensor.shape().len() as u32);
        for &dim in tensor.shape() {
            push_u32(&mut out, dim as u32);
        }
        for &value in tensor.values() {
            out.extend_from_slice(&(value as f32).to_le_bytes());
        }
    }

    fs::write(path, out).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if self.pos + n > self.bytes.len() {
            return Err(self.bad("file is truncated"));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn bad(&self, msg: impl Into<String>) -> TrainError {
        TrainError::BadCheckpoint {
            path: self.path.to_path_buf(),
            msg: msg.into(),
        }
    }
}

/// Read and validate a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes = fs::read(path).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };

    if cur.take(4)? != MAGIC {
        return Err(cur.bad("bad magic, not an XTTS checkpoint"));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(cur.bad(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let header_len = cur.u32()? as usize;
    let header_bytes = cur.take(header_len)?;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| cur.bad(format!("invalid header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| cur.bad(format!("invalid config: {e}")))?;
    header
        .inventory
        .validate()
        .map_err(|e| cur.bad(format!("invalid inventory: {e}")))?;

    let param_count = cur.u32()? as usize;
    let mut values: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..param_count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| cur.bad("parameter name is not UTF-8"))?
            .to_string();
        let rank = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = cur.take(4 * numel)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if values.insert(name.clone(), Tensor::from_vec(&shape, data)).is_some() {
            return Err(cur.bad(format!("duplicate parameter {name:?}")));
        }
    }
    if cur.pos != bytes.len() {
        return Err(cur.bad("trailing bytes after the last parameter block"));
    }

    let params = ParamStore::from_values(&header.config, header.inventory.size(), values)
        .map_err(|e| cur.bad(format!("parameter registry mismatch: {e}")))?;

    if header.speakers.len() != header.config.num_speakers {
        return Err(cur.bad(format!(
            "speaker map has {} entries for {} table rows",
            header.speakers.len(),
            header.config.num_speakers
        )));
    }
    let mut rows: Vec<usize> = header.speakers.values().copied().collect();
    rows.sort_unstable();
    if rows.iter().enumerate().any(|(i, &r)| i != r) {
        return Err(cur.bad("speaker rows do not cover 0..num_speakers"));
    }

    Ok(Checkpoint {
        config: header.config,
        inventory: header.inventory,
        speakers: header.speakers,
        params,
        optimizer: header.optimizer,
        step: header.step,
        schedule: header.schedule,
    })
}
