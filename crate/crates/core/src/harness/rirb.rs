//! RIRB binary format: magic `RIRB`, little-endian u32 fields
//! {version = 1, N, K, Fs}, then N·K little-endian f32 amplitudes in
//! time-major order (row = time sample, column = microphone). A JSON
//! sidecar `<name>.json` carries the room, geometry, source, wall
//! reflection, and seed metadata.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room_sim::{ArrayGeometry, RirMatrix, RoomSpec, SourceSpec};

pub const RIRB_VERSION: u32 = 1;

/// Metadata stored next to the binary matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RirSidecar {
    pub room: RoomSpec,
    pub geometry: ArrayGeometry,
    pub source: SourceSpec,
    pub seed: Option<u64>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_rirb(path: &Path, matrix: &RirMatrix, room: &RoomSpec, seed: Option<u64>) -> Result<()> {
    matrix.validate()?;
    let (k, n) = matrix.data.dim();
    let mut bytes = Vec::with_capacity(16 + 4 * k * n);
    bytes.extend_from_slice(b"RIRB");
    bytes.extend_from_slice(&RIRB_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    bytes.extend_from_slice(&(k as u32).to_le_bytes());
    bytes.extend_from_slice(&(matrix.sample_rate.round() as u32).to_le_bytes());
    for row in matrix.data.rows() {
        for &v in row.iter() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;

    let sidecar = RirSidecar {
        room: room.clone(),
        geometry: matrix.geometry.clone(),
        source: matrix.source.clone(),
        seed,
    };
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

pub fn load_rirb(path: &Path) -> Result<(RirMatrix, RirSidecar)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[0..4] != b"RIRB" {
        return Err(Error::Format("not a RIRB file".into()));
    }
    let u32_at = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    let version = u32_at(4);
    if version != RIRB_VERSION {
        return Err(Error::Format(format!("unsupported RIRB version {version}")));
    }
    let n = u32_at(8) as usize;
    let k = u32_at(12) as usize;
    let fs_hz = u32_at(16) as f64;
    let expected = 20 + 4 * n * k;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "RIRB payload is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }

    let sidecar: RirSidecar = serde_json::from_str(
        &fs::read_to_string(sidecar_path(path)).map_err(|e| {
            Error::Format(format!(
                "missing sidecar {}: {e}",
                sidecar_path(path).display()
            ))
        })?,
    )?;
    if sidecar.geometry.n_mics() != n {
        return Err(Error::Format(format!(
            "sidecar geometry has {} mics, file has {n}",
            sidecar.geometry.n_mics()
        )));
    }

    let mut data = Array2::zeros((k, n));
    let mut at = 20;
    for r in 0..k {
        for c in 0..n {
            data[[r, c]] =
                f32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as f64;
            at += 4;
        }
    }
    Ok((
        RirMatrix {
            data,
            sample_rate: fs_hz,
            geometry: sidecar.geometry.clone(),
            source: sidecar.source.clone(),
        },
        sidecar,
    ))
}
