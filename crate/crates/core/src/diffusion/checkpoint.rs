//! Checkpoint files: one JSON header line (format version, architecture,
//! schedule, training metadata), a newline, then the weights as a
//! little-endian f32 blob in canonical layout order (see the module docs
//! in `denoiser`).
//!
//! Trained weights are f32-rounded at the end of training, so the f32
//! blob is lossless and a save→load round-trip is bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::denoiser::{param_count, DenoiserConfig, DenoiserParams, TrainingMeta};
use super::schedule::ScheduleSpec;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    config: DenoiserConfig,
    schedule: ScheduleSpec,
    meta: TrainingMeta,
}

pub fn save_checkpoint(path: &Path, params: &DenoiserParams) -> Result<()> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_FORMAT_VERSION,
        config: params.config,
        schedule: params.schedule,
        meta: params.meta.clone(),
    };
    let mut file = fs::File::create(path)?;
    serde_json::to_writer(&mut file, &header)?;
    file.write_all(b"\n")?;
    let mut blob = Vec::with_capacity(params.weights.len() * 4);
    for &w in &params.weights {
        blob.extend_from_slice(&(w as f32).to_le_bytes());
    }
    file.write_all(&blob)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<DenoiserParams> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("checkpoint has no header line".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])?;
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint format version {}",
            header.format_version
        )));
    }
    header.config.validate()?;
    let blob = &bytes[newline + 1..];
    let expected = param_count(&header.config);
    if blob.len() != expected * 4 {
        return Err(Error::Format(format!(
            "weight blob is {} bytes, config needs {}",
            blob.len(),
            expected * 4
        )));
    }
    let weights: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(DenoiserParams {
        config: header.config,
        schedule: header.schedule,
        weights,
        meta: header.meta,
    })
}
