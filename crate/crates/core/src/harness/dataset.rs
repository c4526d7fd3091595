//! Training data assembly: simulate RIR images over randomly drawn array
//! configurations and source angles, tile them into normalized patches,
//! and sample the training corpus. Also a synthetic stripe dataset that
//! mimics the straight wavefront structure of linear-array RIR images,
//! used for fast smoke training.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use crate::diffusion::PatchDataset;
use crate::error::Result;
use crate::imaging::{split_patches, Mask, PATCH_SIZE};
use crate::room_sim::{make_arc_array, reflection_coeff_for_t60, simulate_matrix, source_at_angle};

/// Simulate `n_training_images` RIR matrices (random curvature and source
/// angle per image, training T60 and truncation), split each into
/// patches, and draw `n_training_patches` uniformly with replacement.
pub fn build_training_set(config: &ExperimentConfig, seed: u64) -> Result<PatchDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = reflection_coeff_for_t60(&config.room()?, config.t60_train)?;
    let room = config.room()?.with_uniform_reflection(beta)?;

    let mut pool: Vec<Array2<f64>> = Vec::new();
    for _ in 0..config.n_training_images {
        let curvature = *config
            .curvatures
            .choose(&mut rng)
            .expect("config has curvatures");
        let angle = *config
            .source_angles_deg
            .choose(&mut rng)
            .expect("config has angles");
        let array = make_arc_array(config.n_mics, curvature, &room)?;
        let source = source_at_angle(&room, &array, angle)?;
        let matrix = simulate_matrix(&room, &source, &array, config.k_train)?;
        let grid = split_patches(&matrix, &Mask::all_measured(config.n_mics))?;
        pool.extend(grid.patches.into_iter().map(|p| p.pixels));
    }

    let patches: Vec<Array2<f64>> = (0..config.n_training_patches)
        .map(|_| pool[rng.gen_range(0..pool.len())].clone())
        .collect();
    Ok(PatchDataset::new(patches))
}

/// Synthetic patches of a few straight lines with random slope, offset,
/// amplitude, and thickness — the toy stand-in for wavefront imagery.
pub fn make_stripe_dataset(n_patches: usize, seed: u64) -> PatchDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patches = (0..n_patches).map(|_| stripe_patch(&mut rng)).collect();
    PatchDataset::new(patches)
}

/// One random stripe patch (also used to draw held-out test patches).
pub fn stripe_patch(rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n_lines = rng.gen_range(3..=6);
    let mut img: Array2<f64> = Array2::zeros((PATCH_SIZE, PATCH_SIZE));
    for _ in 0..n_lines {
        let intercept = rng.gen_range(0.0..PATCH_SIZE as f64);
        let slope = rng.gen_range(-1.5..1.5);
        let amp = rng.gen_range(0.4..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let sigma = rng.gen_range(0.6..1.4);
        for c in 0..PATCH_SIZE {
            let center = intercept + slope * c as f64;
            let lo = (center - 4.0 * sigma).floor().max(0.0) as usize;
            let hi = ((center + 4.0 * sigma).ceil() as usize).min(PATCH_SIZE - 1);
            for r in lo..=hi {
                let d = r as f64 - center;
                img[[r, c]] += amp * (-d * d / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    let max_abs = img.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max_abs > 1.0 {
        img /= max_abs;
    }
    img
}

/// Patch-set binary: magic `PTCH`, little-endian u32 {version = 1, count,
/// 64, 64}, then count·64·64 little-endian f32 pixels (row-major per
/// patch), plus a JSON sidecar with the count and fingerprint.
pub fn save_patches(path: &std::path::Path, ds: &PatchDataset) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + ds.patches.len() * PATCH_SIZE * PATCH_SIZE * 4);
    bytes.extend_from_slice(b"PTCH");
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&(ds.patches.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(PATCH_SIZE as u32).to_le_bytes());
    bytes.extend_from_slice(&(PATCH_SIZE as u32).to_le_bytes());
    for p in &ds.patches {
        for &v in p.iter() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, &bytes)?;
    let sidecar = serde_json::json!({
        "count": ds.patches.len(),
        "fingerprint": ds.fingerprint,
        "pixel_format": "f32-le",
    });
    std::fs::write(
        path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// Load a patch set; the fingerprint is recomputed from the (f32-rounded)
/// stored pixels.
pub fn load_patches(path: &std::path::Path) -> Result<PatchDataset> {
    use crate::error::Error;
    let bytes = std::fs::read(path)?;
    if bytes.len() < 20 || &bytes[0..4] != b"PTCH" {
        return Err(Error::Format("not a PTCH file".into()));
    }
    let u32_at =
        |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    if u32_at(4) != 1 {
        return Err(Error::Format(format!("unsupported PTCH version {}", u32_at(4))));
    }
    let count = u32_at(8) as usize;
    let (ph, pw) = (u32_at(12) as usize, u32_at(16) as usize);
    if (ph, pw) != (PATCH_SIZE, PATCH_SIZE) {
        return Err(Error::Format(format!("unsupported patch shape {ph}×{pw}")));
    }
    let expected = 20 + count * ph * pw * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "PTCH payload is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let mut at = 20;
    let mut patches = Vec::with_capacity(count);
    for _ in 0..count {
        let mut p = Array2::zeros((ph, pw));
        for v in p.iter_mut() {
            *v = f32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
                as f64;
            at += 4;
        }
        patches.push(p);
    }
    Ok(PatchDataset::new(patches))
}
