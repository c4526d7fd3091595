//! Grayscale export of RIR matrices as 16-bit binary PGM (P5, maxval
//! 65535, big-endian samples per the Netpbm convention). Amplitudes map
//! linearly from [−max|H|, +max|H|] to [0, 65535]; the mapping parameters
//! live in a JSON sidecar so images can be mapped back to amplitudes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room_sim::RirMatrix;

/// Inverse-mapping parameters for an exported image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PgmSidecar {
    pub width: usize,
    pub height: usize,
    /// Half-range of the linear mapping; pixel p ↦ p/65535·2·amp_max − amp_max.
    pub amp_max: f64,
}

pub fn export_rir_image(matrix: &RirMatrix, path: &Path) -> Result<()> {
    let (k, n) = matrix.data.dim();
    let mut amp_max = matrix.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !amp_max.is_finite() {
        return Err(Error::InvalidInput("matrix contains non-finite values".into()));
    }
    if amp_max == 0.0 {
        amp_max = 1.0; // all-zero image maps to mid-gray
    }

    let mut bytes = Vec::with_capacity(32 + 2 * k * n);
    bytes.extend_from_slice(format!("P5\n{n} {k}\n65535\n").as_bytes());
    for row in matrix.data.rows() {
        for &v in row.iter() {
            let p = ((v + amp_max) / (2.0 * amp_max) * 65535.0).round();
            let p = p.clamp(0.0, 65535.0) as u16;
            bytes.extend_from_slice(&p.to_be_bytes());
        }
    }
    fs::File::create(path)?.write_all(&bytes)?;

    let sidecar = PgmSidecar {
        width: n,
        height: k,
        amp_max,
    };
    fs::write(
        path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// Read back a 16-bit P5 file (used by tests and the amplitude inverse map).
pub fn load_pgm(path: &Path) -> Result<(Vec<u16>, usize, usize)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let header_end = bytes
        .windows(6)
        .position(|w| w == b"65535\n")
        .ok_or_else(|| Error::Format("not a 16-bit PGM".into()))?
        + 6;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::Format("PGM header is not ASCII".into()))?;
    let mut fields = header.split_ascii_whitespace();
    if fields.next() != Some("P5") {
        return Err(Error::Format("not a binary PGM".into()));
    }
    let w: usize = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("bad PGM width".into()))?;
    let h: usize = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("bad PGM height".into()))?;
    let payload = &bytes[header_end..];
    if payload.len() != 2 * w * h {
        return Err(Error::Format(format!(
            "PGM payload is {} bytes for {w}×{h}",
            payload.len()
        )));
    }
    let pixels = payload
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((pixels, w, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::room_sim::{
        make_arc_array, simulate_matrix, source_at_angle, ArrayGeometry, Point3, RoomSpec,
        SourceSpec,
    };
    use ndarray::Array2;

    fn wrap(data: Array2<f64>) -> RirMatrix {
        let n = data.ncols();
        RirMatrix {
            data,
            sample_rate: 8000.0,
            geometry: ArrayGeometry {
                positions: (0..n)
                    .map(|i| Point3::new(1.0 + 0.01 * i as f64, 1.0, 1.0))
                    .collect(),
                curvature: 0.0,
                label: "test".into(),
            },
            source: SourceSpec {
                position: Point3::new(2.0, 2.0, 1.0),
                angle_deg: 90.0,
            },
        }
    }

    #[test]
    fn all_zero_matrix_maps_to_midpoint() {
        let m = wrap(Array2::zeros((8, 4)));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.pgm");
        export_rir_image(&m, &path).unwrap();
        let (pixels, w, h) = load_pgm(&path).unwrap();
        assert_eq!((w, h), (4, 8));
        assert!(pixels.iter().all(|&p| p == 32768));
    }

    #[test]
    fn round_trip_within_one_quantization_step() {
        let mut rng_state = 123u64;
        let mut next = move || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 33) as f64 / (1u64 << 31) as f64 - 0.5
        };
        let data = Array2::from_shape_fn((32, 16), |_| next() * 0.2);
        let m = wrap(data.clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.pgm");
        export_rir_image(&m, &path).unwrap();

        let sidecar: PgmSidecar =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap())
                .unwrap();
        let (pixels, w, _) = load_pgm(&path).unwrap();
        let step = 2.0 * sidecar.amp_max / 65535.0;
        for (idx, &p) in pixels.iter().enumerate() {
            let amp = p as f64 / 65535.0 * 2.0 * sidecar.amp_max - sidecar.amp_max;
            let truth = data[[idx / w, idx % w]];
            assert!(
                (amp - truth).abs() <= step,
                "pixel {idx}: {amp} vs {truth}"
            );
        }
    }

    #[test]
    fn extremes_hit_the_pixel_range() {
        let mut data = Array2::zeros((4, 4));
        data[[0, 0]] = -2.0;
        data[[3, 3]] = 2.0;
        let m = wrap(data);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.pgm");
        export_rir_image(&m, &path).unwrap();
        let (pixels, _, _) = load_pgm(&path).unwrap();
        assert_eq!(pixels[0], 0);
        assert_eq!(pixels[15], 65535);
    }

    #[test]
    fn broadside_ula_image_is_left_right_symmetric() {
        let room = RoomSpec::new((6.0, 5.5, 2.8), 8000.0).unwrap();
        let array = make_arc_array(16, 0.0, &room).unwrap();
        let source = source_at_angle(&room, &array, 90.0).unwrap();
        let m = simulate_matrix(&room, &source, &array, 256).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ula.pgm");
        export_rir_image(&m, &path).unwrap();
        let (pixels, w, h) = load_pgm(&path).unwrap();
        // per-column arrival row = argmax distance from mid-gray
        let peak_row = |col: usize| {
            (0..h)
                .max_by_key(|&r| (pixels[r * w + col] as i32 - 32768).abs())
                .unwrap() as i64
        };
        for c in 0..w / 2 {
            let a = peak_row(c);
            let b = peak_row(w - 1 - c);
            assert!((a - b).abs() <= 1, "col {c}: {a} vs {b}");
        }
    }
}
