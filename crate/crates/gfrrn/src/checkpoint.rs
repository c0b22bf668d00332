//! Single-file checkpoint archive: JSON header (format version, config
//! hash, parameter metadata, trainable flags) followed by little-endian
//! f32 parameter data and f64 optimizer state.

use crate::error::{Error, Result};
use crate::params::{ParamGroup, ParamStore};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"GFRN";
const FORMAT_VERSION: u32 = 1;

/// Adam moment vectors for one parameter, stored at full precision.
#[derive(Debug, Clone, Default)]
pub struct MomentPair {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Optimizer state: step count plus per-parameter moments (trainable
/// parameters only).
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    pub step: u64,
    pub moments: BTreeMap<String, MomentPair>,
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    group: ParamGroup,
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config_hash: String,
    epoch: u64,
    step: u64,
    params: Vec<ParamRecord>,
    optimizer_params: Vec<String>,
}

/// Checkpoint metadata returned on load.
#[derive(Debug, Clone)]
pub struct CheckpointInfo {
    pub config_hash: String,
    pub epoch: u64,
    pub step: u64,
}

/// Write atomically (temp file + rename).
pub fn save(
    path: &Path,
    store: &ParamStore,
    optimizer: &OptimizerState,
    config_hash: &str,
    epoch: u64,
) -> Result<()> {
    let header = Header {
        format_version: FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        epoch,
        step: optimizer.step,
        params: store
            .iter()
            .map(|(name, e)| ParamRecord {
                name: name.clone(),
                shape: e.tensor.shape(),
                group: e.group,
                trainable: e.trainable,
            })
            .collect(),
        optimizer_params: optimizer.moments.keys().cloned().collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Checkpoint(format!("header encode: {e}")))?;

    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_u64::<LittleEndian>(header_json.len() as u64)?;
        w.write_all(&header_json)?;
        for (_, e) in store.iter() {
            for &v in e.tensor.value().iter() {
                w.write_f32::<LittleEndian>(v as f32)?;
            }
        }
        for pair in optimizer.moments.values() {
            for &v in pair.m.iter().chain(pair.v.iter()) {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Load a checkpoint into an existing store with matching parameter
/// names/shapes. Values round-trip bitwise at f32 precision.
pub fn load(
    path: &Path,
    store: &mut ParamStore,
    expected_config_hash: Option<&str>,
) -> Result<(CheckpointInfo, OptimizerState)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let header_len = r.read_u64::<LittleEndian>()? as usize;
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json)?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| Error::Checkpoint(format!("header decode: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if let Some(expect) = expected_config_hash {
        if header.config_hash != expect {
            return Err(Error::Checkpoint(format!(
                "config hash mismatch: checkpoint {} vs current {expect}",
                header.config_hash
            )));
        }
    }

    for rec in &header.params {
        let entry = store.get(&rec.name).ok_or_else(|| {
            Error::Checkpoint(format!("parameter {} missing in current model", rec.name))
        })?;
        if entry.tensor.shape() != rec.shape {
            return Err(Error::Checkpoint(format!(
                "parameter {} shape mismatch",
                rec.name
            )));
        }
        let count: usize = rec.shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(r.read_f32::<LittleEndian>()? as f64);
        }
        entry
            .tensor
            .set_value(ArrayD::from_shape_vec(IxDyn(&rec.shape), data).unwrap());
        store.set_trainable(&rec.name, rec.trainable);
    }

    let mut optimizer = OptimizerState {
        step: header.step,
        moments: BTreeMap::new(),
    };
    for name in &header.optimizer_params {
        let entry = store
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("optimizer state for unknown {name}")))?;
        let count: usize = entry.tensor.shape().iter().product();
        let mut m = Vec::with_capacity(count);
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            m.push(r.read_f64::<LittleEndian>()?);
        }
        for _ in 0..count {
            v.push(r.read_f64::<LittleEndian>()?);
        }
        optimizer.moments.insert(name.clone(), MomentPair { m, v });
    }

    Ok((
        CheckpointInfo {
            config_hash: header.config_hash,
            epoch: header.epoch,
            step: header.step,
        },
        optimizer,
    ))
}
