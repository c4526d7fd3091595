//! Image-form conversion of RIR matrices: microphone-column masks, tiling
//! into overlapping 64×64 patches with per-patch normalization, and the
//! inverse reassembly.
//!
//! The matrix is treated as a grayscale image with time as the row axis
//! and microphone index as the column axis. Arrays narrower than 64
//! microphones are padded by duplicating the rightmost column; matrices
//! shorter than 64 samples are zero-padded at the bottom. Patches overlap
//! by 16 px (stride 48) and reassembly keeps only each patch's central
//! portion — the overlap ownership is split at the midpoint, with no
//! blending, so arrival wavefronts are never seam-averaged.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room_sim::RirMatrix;

/// Patch edge length in pixels.
pub const PATCH_SIZE: usize = 64;
/// Overlap between adjacent patches (25% of the patch size).
pub const PATCH_OVERLAP: usize = 16;
/// Tiling stride.
pub const PATCH_STRIDE: usize = PATCH_SIZE - PATCH_OVERLAP;

/// Which microphone columns are measured versus missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    measured: Vec<bool>,
    pub ratio: f64,
    pub seed: u64,
}

impl Mask {
    /// Number of microphones covered (N = measured + missing).
    pub fn len(&self) -> usize {
        self.measured.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measured.is_empty()
    }

    pub fn is_measured(&self, i: usize) -> bool {
        self.measured[i]
    }

    pub fn n_measured(&self) -> usize {
        self.measured.iter().filter(|&&m| m).count()
    }

    pub fn n_missing(&self) -> usize {
        self.len() - self.n_measured()
    }

    pub fn measured_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.measured[i]).collect()
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.measured[i]).collect()
    }

    /// A mask with every column measured (ratio 0).
    pub fn all_measured(n_mics: usize) -> Self {
        Mask {
            measured: vec![true; n_mics],
            ratio: 0.0,
            seed: 0,
        }
    }

    /// Build a mask from an explicit measured vector (for file round-trips).
    pub fn from_measured(measured: Vec<bool>, ratio: f64, seed: u64) -> Result<Self> {
        let mask = Mask {
            measured,
            ratio,
            seed,
        };
        if mask.n_measured() < 2 {
            return Err(Error::InvalidInput(
                "mask must leave at least 2 measured columns".into(),
            ));
        }
        Ok(mask)
    }
}

/// Mark `round(ratio·n_mics)` (round half up) columns missing, chosen
/// uniformly at random; deterministic for a given seed.
pub fn make_mask(n_mics: usize, ratio: f64, seed: u64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidInput(format!(
            "mask ratio {ratio} outside [0, 1]"
        )));
    }
    let n_missing = (ratio * n_mics as f64 + 0.5).floor() as usize;
    if n_mics.saturating_sub(n_missing) < 2 {
        return Err(Error::InvalidInput(format!(
            "ratio {ratio} would leave {} measured columns; need at least 2",
            n_mics.saturating_sub(n_missing)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let missing = rand::seq::index::sample(&mut rng, n_mics, n_missing);
    let mut measured = vec![true; n_mics];
    for i in missing {
        measured[i] = false;
    }
    Ok(Mask {
        measured,
        ratio,
        seed,
    })
}

/// One 64×64 tile of the (padded) image.
#[derive(Debug, Clone)]
pub struct Patch {
    /// Top-left corner in padded-image coordinates.
    pub row_offset: usize,
    pub col_offset: usize,
    /// Max-abs amplitude over the measured entries (1.0 fallback when the
    /// measured region is all zero).
    pub scale: f64,
    /// Normalized pixels in [-1, 1]; missing columns zeroed.
    pub pixels: Array2<f64>,
    /// Per-pixel known map: true for measured columns and padding rows.
    pub known: Array2<bool>,
    /// The half-open pixel ranges this patch owns at reassembly.
    pub owned_rows: (usize, usize),
    pub owned_cols: (usize, usize),
    /// Set when the measured region was all zero and scale fell back to 1.
    pub zero_scale_fallback: bool,
}

/// Padding applied before tiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadSpec {
    pub orig_rows: usize,
    pub orig_cols: usize,
    pub padded_rows: usize,
    pub padded_cols: usize,
}

/// The tiling of one RIR image into normalized patches.
#[derive(Debug, Clone)]
pub struct PatchGrid {
    pub patches: Vec<Patch>,
    pub pad: PadSpec,
}

impl PatchGrid {
    pub fn n_patches(&self) -> usize {
        self.patches.len()
    }

    /// Source dimensions (K, N) of the unpadded image.
    pub fn source_dims(&self) -> (usize, usize) {
        (self.pad.orig_rows, self.pad.orig_cols)
    }
}

/// Tile offsets along one axis: stride 48, with the last tile clamped so
/// its far edge lands exactly on the image edge.
fn axis_offsets(len: usize) -> Vec<usize> {
    debug_assert!(len >= PATCH_SIZE);
    let mut offsets = Vec::new();
    let last = len - PATCH_SIZE;
    let mut o = 0;
    loop {
        if o >= last {
            offsets.push(last);
            break;
        }
        offsets.push(o);
        o += PATCH_STRIDE;
    }
    offsets
}

/// Ownership cut points between consecutive tiles: the midpoint of each
/// overlap, so central portions partition the axis exactly.
fn axis_cuts(offsets: &[usize], len: usize) -> Vec<(usize, usize)> {
    let mut cuts = Vec::with_capacity(offsets.len());
    let mut start = 0;
    for i in 0..offsets.len() {
        let end = if i + 1 == offsets.len() {
            len
        } else {
            (offsets[i + 1] + offsets[i] + PATCH_SIZE) / 2
        };
        cuts.push((start, end));
        start = end;
    }
    cuts
}

/// Split an RIR matrix into overlapping normalized patches.
///
/// Each patch's scale is the max-abs amplitude over its *measured*
/// entries — the statistic that is still computable when the missing
/// columns are genuinely unknown. Missing columns are zeroed after the
/// scale is taken.
pub fn split_patches(matrix: &RirMatrix, mask: &Mask) -> Result<PatchGrid> {
    let (k, n) = matrix.data.dim();
    if k < 1 {
        return Err(Error::Shape("matrix has no time samples".into()));
    }
    if n < 2 {
        return Err(Error::Shape("matrix needs at least 2 microphones".into()));
    }
    if mask.len() != n {
        return Err(Error::Shape(format!(
            "mask covers {} mics but matrix has {n}",
            mask.len()
        )));
    }

    let padded_rows = k.max(PATCH_SIZE);
    let padded_cols = n.max(PATCH_SIZE);
    let pad = PadSpec {
        orig_rows: k,
        orig_cols: n,
        padded_rows,
        padded_cols,
    };

    // padded lookup: duplicated rightmost column, zero rows below K
    let src_col = |c: usize| c.min(n - 1);
    let value = |r: usize, c: usize| {
        if r < k {
            matrix.data[[r, src_col(c)]]
        } else {
            0.0
        }
    };
    let col_known = |c: usize| mask.is_measured(src_col(c));

    let row_offsets = axis_offsets(padded_rows);
    let col_offsets = axis_offsets(padded_cols);
    let row_cuts = axis_cuts(&row_offsets, padded_rows);
    let col_cuts = axis_cuts(&col_offsets, padded_cols);

    let mut patches = Vec::with_capacity(row_offsets.len() * col_offsets.len());
    for (ri, &ro) in row_offsets.iter().enumerate() {
        for (ci, &co) in col_offsets.iter().enumerate() {
            let mut max_abs = 0.0f64;
            for r in 0..PATCH_SIZE {
                for c in 0..PATCH_SIZE {
                    if col_known(co + c) && ro + r < k {
                        max_abs = max_abs.max(value(ro + r, co + c).abs());
                    }
                }
            }
            let zero_scale_fallback = max_abs == 0.0;
            let scale = if zero_scale_fallback { 1.0 } else { max_abs };

            let mut pixels = Array2::zeros((PATCH_SIZE, PATCH_SIZE));
            let mut known = Array2::from_elem((PATCH_SIZE, PATCH_SIZE), false);
            for r in 0..PATCH_SIZE {
                for c in 0..PATCH_SIZE {
                    let kn = col_known(co + c) || ro + r >= k;
                    known[[r, c]] = kn;
                    if col_known(co + c) {
                        pixels[[r, c]] = (value(ro + r, co + c) / scale).clamp(-1.0, 1.0);
                    }
                }
            }

            patches.push(Patch {
                row_offset: ro,
                col_offset: co,
                scale,
                pixels,
                known,
                owned_rows: row_cuts[ri],
                owned_cols: col_cuts[ci],
                zero_scale_fallback,
            });
        }
    }
    Ok(PatchGrid { patches, pad })
}

/// Rebuild the full K×N image from per-patch pixels (typically inpainted).
///
/// Pixels are rescaled by each patch's stored scale; only central portions
/// are written, and padding rows/columns are dropped.
pub fn reassemble(grid: &PatchGrid, inpainted: &[Array2<f64>]) -> Result<Array2<f64>> {
    if inpainted.len() != grid.patches.len() {
        return Err(Error::Shape(format!(
            "{} patches supplied for a {}-patch grid",
            inpainted.len(),
            grid.patches.len()
        )));
    }
    for (i, p) in inpainted.iter().enumerate() {
        if p.dim() != (PATCH_SIZE, PATCH_SIZE) {
            return Err(Error::Shape(format!(
                "patch {i} has shape {:?}, expected 64×64",
                p.dim()
            )));
        }
    }

    let mut padded = Array2::zeros((grid.pad.padded_rows, grid.pad.padded_cols));
    for (patch, pixels) in grid.patches.iter().zip(inpainted.iter()) {
        let (r0, r1) = patch.owned_rows;
        let (c0, c1) = patch.owned_cols;
        for r in r0..r1 {
            for c in c0..c1 {
                padded[[r, c]] = pixels[[r - patch.row_offset, c - patch.col_offset]] * patch.scale;
            }
        }
    }
    Ok(padded
        .slice(ndarray::s![..grid.pad.orig_rows, ..grid.pad.orig_cols])
        .to_owned())
}

/// Merge a reconstructed image with the original: measured columns are
/// copied verbatim from the original; only missing columns come from the
/// reconstruction.
pub fn complete_matrix(
    original: &RirMatrix,
    mask: &Mask,
    reconstructed: &Array2<f64>,
) -> Result<RirMatrix> {
    let (k, n) = original.data.dim();
    if reconstructed.dim() != (k, n) {
        return Err(Error::Shape(format!(
            "reconstruction is {:?} but original is {:?}",
            reconstructed.dim(),
            original.data.dim()
        )));
    }
    if mask.len() != n {
        return Err(Error::Shape(format!(
            "mask covers {} mics but matrix has {n}",
            mask.len()
        )));
    }
    let mut data = original.data.clone();
    for i in 0..n {
        if !mask.is_measured(i) {
            for r in 0..k {
                data[[r, i]] = reconstructed[[r, i]];
            }
        }
    }
    Ok(RirMatrix {
        data,
        sample_rate: original.sample_rate,
        geometry: original.geometry.clone(),
        source: original.source.clone(),
    })
}
