//! Compact noise-prediction network for 64×64 single-channel patches.
//!
//! Encoder-decoder with residual blocks, stride-2 downsampling, nearest
//! upsampling, additive skip connections, and a sinusoidal timestep
//! embedding injected as a per-channel bias in every residual block.
//! Forward and backward passes are written out by hand over flat `f64`
//! buffers; gradients are checked against finite differences in the tests.
//!
//! Weight layout (the checkpoint blob order) follows the construction
//! order in [`Offsets::new`]: time-embedding MLP, stem conv, then per
//! encoder level (block, downsample), the middle block, per decoder level
//! from the deepest up (upsample conv, block), and the head conv. Convs
//! are stored `[out_ch][in_ch][3][3]`, linears `[out][in]`, biases last
//! within each layer.

use rand::prelude::*;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schedule::ScheduleSpec;
use crate::error::{Error, Result};
use crate::imaging::PATCH_SIZE;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    /// Channels at the full-resolution level; doubled at each level below.
    pub base_channels: usize,
    /// Number of resolution levels (1 = no down/upsampling).
    pub depth: usize,
    /// Width of the sinusoidal timestep embedding (even).
    pub time_embed_dim: usize,
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::InvalidInput("base_channels must be positive".into()));
        }
        if self.depth == 0 || PATCH_SIZE % (1 << (self.depth - 1)) != 0 || self.depth > 5 {
            return Err(Error::InvalidInput(format!(
                "depth {} unsupported for {PATCH_SIZE}-pixel patches",
                self.depth
            )));
        }
        if self.time_embed_dim < 4 || self.time_embed_dim % 2 != 0 {
            return Err(Error::InvalidInput(
                "time_embed_dim must be even and at least 4".into(),
            ));
        }
        Ok(())
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    fn side(&self, level: usize) -> usize {
        PATCH_SIZE >> level
    }
}

/// Trained weights plus everything needed to rebuild and document them.
#[derive(Debug, Clone)]
pub struct DenoiserParams {
    pub config: DenoiserConfig,
    pub schedule: ScheduleSpec,
    pub weights: Vec<f64>,
    pub meta: TrainingMeta,
}

/// Provenance of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Copy)]
struct BlockOff {
    w1: usize,
    b1: usize,
    lw: usize,
    lb: usize,
    w2: usize,
    b2: usize,
}

/// Flat-buffer offsets for every tensor, in canonical (checkpoint) order.
#[derive(Debug, Clone)]
pub(crate) struct Offsets {
    t1w: usize,
    t1b: usize,
    t2w: usize,
    t2b: usize,
    stem_w: usize,
    stem_b: usize,
    enc: Vec<BlockOff>,
    down: Vec<(usize, usize)>,
    mid: BlockOff,
    up: Vec<(usize, usize)>,
    dec: Vec<BlockOff>,
    head_w: usize,
    head_b: usize,
    pub(crate) total: usize,
}

impl Offsets {
    pub(crate) fn new(cfg: &DenoiserConfig) -> Self {
        let e = cfg.time_embed_dim;
        let mut cursor = 0usize;
        let mut take = |len: usize| {
            let at = cursor;
            cursor += len;
            at
        };
        let block = |ch: usize, e: usize, take: &mut dyn FnMut(usize) -> usize| BlockOff {
            w1: take(ch * ch * 9),
            b1: take(ch),
            lw: take(ch * e),
            lb: take(ch),
            w2: take(ch * ch * 9),
            b2: take(ch),
        };

        let t1w = take(e * e);
        let t1b = take(e);
        let t2w = take(e * e);
        let t2b = take(e);
        let c0 = cfg.channels(0);
        let stem_w = take(c0 * 9);
        let stem_b = take(c0);

        let mut enc = Vec::new();
        let mut down = Vec::new();
        for l in 0..cfg.depth - 1 {
            let ch = cfg.channels(l);
            enc.push(block(ch, e, &mut take));
            let next = cfg.channels(l + 1);
            down.push((take(next * ch * 9), take(next)));
        }
        let mid = block(cfg.channels(cfg.depth - 1), e, &mut take);
        let mut up = vec![(0usize, 0usize); cfg.depth.saturating_sub(1)];
        let mut dec: Vec<Option<BlockOff>> = vec![None; cfg.depth.saturating_sub(1)];
        for l in (0..cfg.depth - 1).rev() {
            let ch = cfg.channels(l);
            let deeper = cfg.channels(l + 1);
            up[l] = (take(ch * deeper * 9), take(ch));
            dec[l] = Some(block(ch, e, &mut take));
        }
        let dec = dec.into_iter().map(|b| b.unwrap()).collect();
        let head_w = take(c0 * 9);
        let head_b = take(1);

        Offsets {
            t1w,
            t1b,
            t2w,
            t2b,
            stem_w,
            stem_b,
            enc,
            down,
            mid,
            up,
            dec,
            head_w,
            head_b,
            total: cursor,
        }
    }
}

/// Number of weights a config requires.
pub fn param_count(cfg: &DenoiserConfig) -> usize {
    Offsets::new(cfg).total
}

/// He-style initialization; the head conv starts at zero so the untrained
/// network predicts zero noise.
pub fn init_weights(cfg: &DenoiserConfig, rng: &mut impl Rng) -> Vec<f64> {
    let off = Offsets::new(cfg);
    let mut w = vec![0.0f64; off.total];
    let e = cfg.time_embed_dim;

    let fill = |at: usize, len: usize, fan_in: usize, w: &mut Vec<f64>, rng: &mut dyn RngCore| {
        let std = (2.0 / fan_in as f64).sqrt();
        for v in &mut w[at..at + len] {
            let z: f64 = StandardNormal.sample(rng);
            *v = std * z;
        }
    };

    fill(off.t1w, e * e, e, &mut w, rng);
    fill(off.t2w, e * e, e, &mut w, rng);
    let c0 = cfg.channels(0);
    fill(off.stem_w, c0 * 9, 9, &mut w, rng);
    for l in 0..cfg.depth - 1 {
        let ch = cfg.channels(l);
        let next = cfg.channels(l + 1);
        let b = off.enc[l];
        fill(b.w1, ch * ch * 9, ch * 9, &mut w, rng);
        fill(b.lw, ch * e, e, &mut w, rng);
        fill(b.w2, ch * ch * 9, ch * 9, &mut w, rng);
        fill(off.down[l].0, next * ch * 9, ch * 9, &mut w, rng);
    }
    let chm = cfg.channels(cfg.depth - 1);
    fill(off.mid.w1, chm * chm * 9, chm * 9, &mut w, rng);
    fill(off.mid.lw, chm * e, e, &mut w, rng);
    fill(off.mid.w2, chm * chm * 9, chm * 9, &mut w, rng);
    for l in 0..cfg.depth - 1 {
        let ch = cfg.channels(l);
        let deeper = cfg.channels(l + 1);
        let b = off.dec[l];
        fill(off.up[l].0, ch * deeper * 9, deeper * 9, &mut w, rng);
        fill(b.w1, ch * ch * 9, ch * 9, &mut w, rng);
        fill(b.lw, ch * e, e, &mut w, rng);
        fill(b.w2, ch * ch * 9, ch * 9, &mut w, rng);
    }
    // head left at zero
    w
}

/// exp(x) via range reduction and a degree-10 Taylor polynomial
/// (relative error ≈ 2e-13). Inlines into the activation loops, which a
/// libm call would keep from vectorizing; those loops are a large share
/// of the forward cost.
#[inline(always)]
fn fast_exp(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 0.693_147_180_369_123_8;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let x = x.clamp(-708.0, 708.0);
    let kf = (x * LOG2E).round();
    let r = (x - kf * LN2_HI) - kf * LN2_LO;
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0
                    + r * (1.0 / 24.0
                        + r * (1.0 / 120.0
                            + r * (1.0 / 720.0
                                + r * (1.0 / 5040.0
                                    + r * (1.0 / 40320.0
                                        + r * (1.0 / 362880.0 + r * (1.0 / 3628800.0))))))))));
    let k = kf as i64;
    if k <= -1022 {
        return 0.0;
    }
    f64::from_bits(((k + 1023) as u64) << 52) * p
}

#[inline(always)]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + fast_exp(-x))
}

#[inline(always)]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline(always)]
fn silu_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Sinusoidal timestep embedding of width `dim`.
pub fn sinusoidal_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut emb = vec![0.0; dim];
    for k in 0..half {
        let freq = if half > 1 {
            (10000.0f64).powf(-(k as f64) / (half as f64 - 1.0))
        } else {
            1.0
        };
        emb[k] = (t as f64 * freq).sin();
        emb[half + k] = (t as f64 * freq).cos();
    }
    emb
}

// ---------------------------------------------------------------------------
// Flat-buffer layer primitives
// ---------------------------------------------------------------------------

/// One output row of a 3×3 convolution: all nine taps fused into a single
/// pass. Missing edge rows are handled by zeroing that row's kernel
/// weights while pointing the row reference at valid memory.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn conv3x3_row(orow: &mut [f64], rm1: &[f64], r0: &[f64], rp1: &[f64], k: &[f64; 9], w: usize) {
    let (k00, k01, k02) = (k[0], k[1], k[2]);
    let (k10, k11, k12) = (k[3], k[4], k[5]);
    let (k20, k21, k22) = (k[6], k[7], k[8]);
    orow[0] += k01 * rm1[0] + k02 * rm1[1] + k11 * r0[0] + k12 * r0[1] + k21 * rp1[0] + k22 * rp1[1];
    // the windows/zip form keeps the stencil free of bounds checks so it
    // vectorizes; indexed slices here compile to scalar code
    for (((o, wm), w0), wp) in orow[1..w - 1]
        .iter_mut()
        .zip(rm1.windows(3))
        .zip(r0.windows(3))
        .zip(rp1.windows(3))
    {
        *o += k00 * wm[0]
            + k01 * wm[1]
            + k02 * wm[2]
            + k10 * w0[0]
            + k11 * w0[1]
            + k12 * w0[2]
            + k20 * wp[0]
            + k21 * wp[1]
            + k22 * wp[2];
    }
    orow[w - 1] += k00 * rm1[w - 2]
        + k01 * rm1[w - 1]
        + k10 * r0[w - 2]
        + k11 * r0[w - 1]
        + k20 * rp1[w - 2]
        + k21 * rp1[w - 1];
}

#[inline(always)]
fn plane_conv3x3(oplane: &mut [f64], iplane: &[f64], k: &[f64], h: usize, w: usize) {
    for y in 0..h {
        let r0 = &iplane[y * w..(y + 1) * w];
        let rm1 = if y > 0 { &iplane[(y - 1) * w..y * w] } else { r0 };
        let rp1 = if y + 1 < h {
            &iplane[(y + 1) * w..(y + 2) * w]
        } else {
            r0
        };
        let kk = [
            if y > 0 { k[0] } else { 0.0 },
            if y > 0 { k[1] } else { 0.0 },
            if y > 0 { k[2] } else { 0.0 },
            k[3],
            k[4],
            k[5],
            if y + 1 < h { k[6] } else { 0.0 },
            if y + 1 < h { k[7] } else { 0.0 },
            if y + 1 < h { k[8] } else { 0.0 },
        ];
        let orow = &mut oplane[y * w..(y + 1) * w];
        conv3x3_row(orow, rm1, r0, rp1, &kk, w);
    }
}

/// 3×3 same-padding convolution, NCHW planes.
fn conv3x3(inp: &[f64], cin: usize, h: usize, w: usize, wgt: &[f64], bias: &[f64], cout: usize, out: &mut [f64]) {
    debug_assert_eq!(inp.len(), cin * h * w);
    debug_assert_eq!(out.len(), cout * h * w);
    for oc in 0..cout {
        let oplane = &mut out[oc * h * w..(oc + 1) * h * w];
        oplane.fill(bias[oc]);
        for ic in 0..cin {
            let iplane = &inp[ic * h * w..(ic + 1) * h * w];
            let k = &wgt[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
            plane_conv3x3(oplane, iplane, k, h, w);
        }
    }
}

/// Input gradient of [`conv3x3`]: a correlation, i.e. convolution with the
/// kernel rotated 180° and the channel roles swapped.
fn conv3x3_back_input(dout: &[f64], cout: usize, h: usize, w: usize, wgt: &[f64], cin: usize, dinp: &mut [f64]) {
    dinp.fill(0.0);
    for ic in 0..cin {
        let gplane = &mut dinp[ic * h * w..(ic + 1) * h * w];
        for oc in 0..cout {
            let dplane = &dout[oc * h * w..(oc + 1) * h * w];
            let k = &wgt[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
            let flipped = [k[8], k[7], k[6], k[5], k[4], k[3], k[2], k[1], k[0]];
            plane_conv3x3(gplane, dplane, &flipped, h, w);
        }
    }
}

/// Weight and bias gradients of [`conv3x3`], accumulated into `dwb` — the
/// contiguous `[weights | biases]` region of the flat gradient buffer.
fn conv3x3_back_weights(inp: &[f64], cin: usize, h: usize, w: usize, dout: &[f64], cout: usize, dwb: &mut [f64]) {
    let (dwgt, dbias) = dwb.split_at_mut(cout * cin * 9);
    for oc in 0..cout {
        let dplane = &dout[oc * h * w..(oc + 1) * h * w];
        dbias[oc] += dplane.iter().sum::<f64>();
        for ic in 0..cin {
            let iplane = &inp[ic * h * w..(ic + 1) * h * w];
            let dk = &mut dwgt[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
            for ky in 0..3usize {
                let mut acc = [0.0f64; 3];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let drow = &dplane[y * w..(y + 1) * w];
                    let irow = &iplane[sy as usize * w..sy as usize * w + w];
                    let mut a0 = 0.0;
                    for (d, i) in drow[1..].iter().zip(irow[..w - 1].iter()) {
                        a0 += d * i;
                    }
                    let mut a1 = 0.0;
                    for (d, i) in drow.iter().zip(irow.iter()) {
                        a1 += d * i;
                    }
                    let mut a2 = 0.0;
                    for (d, i) in drow[..w - 1].iter().zip(irow[1..].iter()) {
                        a2 += d * i;
                    }
                    acc[0] += a0;
                    acc[1] += a1;
                    acc[2] += a2;
                }
                dk[ky * 3] += acc[0];
                dk[ky * 3 + 1] += acc[1];
                dk[ky * 3 + 2] += acc[2];
            }
        }
    }
}

/// 3×3 convolution with stride 2 (the downsampling layer).
///
/// With even input width, only the `kx = 0` tap can fall off the left
/// edge (at x = 0), so the inner loops go branch-free.
fn conv3x3_s2(inp: &[f64], cin: usize, h: usize, w: usize, wgt: &[f64], bias: &[f64], cout: usize, out: &mut [f64]) {
    let (h2, w2) = (h / 2, w / 2);
    for oc in 0..cout {
        let oplane = &mut out[oc * h2 * w2..(oc + 1) * h2 * w2];
        oplane.fill(bias[oc]);
        for ic in 0..cin {
            let iplane = &inp[ic * h * w..(ic + 1) * h * w];
            let k = &wgt[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
            for y in 0..h2 {
                let orow = &mut oplane[y * w2..(y + 1) * w2];
                for ky in 0..3usize {
                    let sy = 2 * y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let irow = &iplane[sy as usize * w..sy as usize * w + w];
                    let (w0, w1, w2k) = (k[ky * 3], k[ky * 3 + 1], k[ky * 3 + 2]);
                    orow[0] += w1 * irow[0] + w2k * irow[1];
                    for x in 1..w2 {
                        orow[x] += w0 * irow[2 * x - 1] + w1 * irow[2 * x] + w2k * irow[2 * x + 1];
                    }
                }
            }
        }
    }
}

fn conv3x3_s2_back_input(dout: &[f64], cout: usize, h: usize, w: usize, wgt: &[f64], cin: usize, dinp: &mut [f64]) {
    let (h2, w2) = (h / 2, w / 2);
    dinp.fill(0.0);
    for oc in 0..cout {
        let dplane = &dout[oc * h2 * w2..(oc + 1) * h2 * w2];
        for ic in 0..cin {
            let gplane = &mut dinp[ic * h * w..(ic + 1) * h * w];
            let k = &wgt[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
            for y in 0..h2 {
                let drow = &dplane[y * w2..(y + 1) * w2];
                for ky in 0..3usize {
                    let sy = 2 * y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let grow = &mut gplane[sy as usize * w..sy as usize * w + w];
                    let (w0, w1, w2k) = (k[ky * 3], k[ky * 3 + 1], k[ky * 3 + 2]);
                    grow[0] += w1 * drow[0];
                    grow[1] += w2k * drow[0];
                    for x in 1..w2 {
                        grow[2 * x - 1] += w0 * drow[x];
                        grow[2 * x] += w1 * drow[x];
                        grow[2 * x + 1] += w2k * drow[x];
                    }
                }
            }
        }
    }
}

fn conv3x3_s2_back_weights(inp: &[f64], cin: usize, h: usize, w: usize, dout: &[f64], cout: usize, dwb: &mut [f64]) {
    let (h2, w2) = (h / 2, w / 2);
    let (dwgt, dbias) = dwb.split_at_mut(cout * cin * 9);
    for oc in 0..cout {
        let dplane = &dout[oc * h2 * w2..(oc + 1) * h2 * w2];
        dbias[oc] += dplane.iter().sum::<f64>();
        for ic in 0..cin {
            let iplane = &inp[ic * h * w..(ic + 1) * h * w];
            let dk = &mut dwgt[(oc * cin + ic) * 9..(oc * cin + ic) * 9 + 9];
            for y in 0..h2 {
                let drow = &dplane[y * w2..(y + 1) * w2];
                for ky in 0..3usize {
                    let sy = 2 * y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let irow = &iplane[sy as usize * w..sy as usize * w + w];
                    let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
                    for x in 1..w2 {
                        a0 += drow[x] * irow[2 * x - 1];
                    }
                    for x in 0..w2 {
                        a1 += drow[x] * irow[2 * x];
                    }
                    for x in 0..w2 {
                        a2 += drow[x] * irow[2 * x + 1];
                    }
                    dk[ky * 3] += a0;
                    dk[ky * 3 + 1] += a1;
                    dk[ky * 3 + 2] += a2;
                }
            }
        }
    }
}

/// Nearest-neighbor 2× upsample.
fn upsample2(inp: &[f64], c: usize, h: usize, w: usize, out: &mut [f64]) {
    let (h2, w2) = (2 * h, 2 * w);
    for ch in 0..c {
        let iplane = &inp[ch * h * w..(ch + 1) * h * w];
        let oplane = &mut out[ch * h2 * w2..(ch + 1) * h2 * w2];
        for y in 0..h2 {
            let irow = &iplane[(y / 2) * w..(y / 2) * w + w];
            let orow = &mut oplane[y * w2..(y + 1) * w2];
            for x in 0..w2 {
                orow[x] = irow[x / 2];
            }
        }
    }
}

fn upsample2_back(dout: &[f64], c: usize, h: usize, w: usize, dinp: &mut [f64]) {
    let (h2, w2) = (2 * h, 2 * w);
    for ch in 0..c {
        let dplane = &dout[ch * h2 * w2..(ch + 1) * h2 * w2];
        let gplane = &mut dinp[ch * h * w..(ch + 1) * h * w];
        gplane.fill(0.0);
        for y in 0..h2 {
            let drow = &dplane[y * w2..(y + 1) * w2];
            let grow = &mut gplane[(y / 2) * w..(y / 2) * w + w];
            for x in 0..w2 {
                grow[x / 2] += drow[x];
            }
        }
    }
}

fn linear(x: &[f64], wgt: &[f64], bias: &[f64], out: &mut [f64]) {
    let nin = x.len();
    for (o, out_v) in out.iter_mut().enumerate() {
        let row = &wgt[o * nin..(o + 1) * nin];
        let mut acc = bias[o];
        for (a, b) in row.iter().zip(x.iter()) {
            acc += a * b;
        }
        *out_v = acc;
    }
}

fn linear_back(x: &[f64], wgt: &[f64], dout: &[f64], dwb: &mut [f64], dx: &mut [f64]) {
    let nin = x.len();
    let (dwgt, dbias) = dwb.split_at_mut(dout.len() * nin);
    for (o, &d) in dout.iter().enumerate() {
        dbias[o] += d;
        let wrow = &wgt[o * nin..(o + 1) * nin];
        let grow = &mut dwgt[o * nin..(o + 1) * nin];
        for i in 0..nin {
            grow[i] += d * x[i];
            dx[i] += d * wrow[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

struct BlockTrace {
    x_in: Vec<f64>,
    a: Vec<f64>,
    h_pre: Vec<f64>,
    b: Vec<f64>,
}

/// Everything the backward pass needs from a forward evaluation.
pub struct Trace {
    sin_emb: Vec<f64>,
    t1_pre: Vec<f64>,
    t1_act: Vec<f64>,
    temb_pre: Vec<f64>,
    temb_act: Vec<f64>,
    input: Vec<f64>,
    enc: Vec<BlockTrace>,
    skips: Vec<Vec<f64>>,
    mid: BlockTrace,
    up_in: Vec<Vec<f64>>,
    dec: Vec<BlockTrace>,
    head_in: Vec<f64>,
}

/// A view over config + flat weights that can run the network.
pub struct Denoiser<'a> {
    cfg: &'a DenoiserConfig,
    off: Offsets,
    w: &'a [f64],
}

impl<'a> Denoiser<'a> {
    pub fn new(cfg: &'a DenoiserConfig, weights: &'a [f64]) -> Result<Self> {
        cfg.validate()?;
        let off = Offsets::new(cfg);
        if weights.len() != off.total {
            return Err(Error::Shape(format!(
                "weight vector has {} entries, config needs {}",
                weights.len(),
                off.total
            )));
        }
        Ok(Denoiser { cfg, off, w: weights })
    }

    pub fn from_params(params: &'a DenoiserParams) -> Result<Self> {
        Self::new(&params.config, &params.weights)
    }

    fn resblock(
        &self,
        off: BlockOff,
        x_in: Vec<f64>,
        temb_act: &[f64],
        ch: usize,
        side: usize,
    ) -> (Vec<f64>, BlockTrace) {
        let hw = side * side;
        let e = self.cfg.time_embed_dim;
        let a: Vec<f64> = x_in.iter().map(|&v| silu(v)).collect();
        let mut h_pre = vec![0.0; ch * hw];
        conv3x3(
            &a,
            ch,
            side,
            side,
            &self.w[off.w1..off.w1 + ch * ch * 9],
            &self.w[off.b1..off.b1 + ch],
            ch,
            &mut h_pre,
        );
        let mut tbias = vec![0.0; ch];
        linear(
            temb_act,
            &self.w[off.lw..off.lw + ch * e],
            &self.w[off.lb..off.lb + ch],
            &mut tbias,
        );
        for c in 0..ch {
            let plane = &mut h_pre[c * hw..(c + 1) * hw];
            let tb = tbias[c];
            for v in plane.iter_mut() {
                *v += tb;
            }
        }
        let b: Vec<f64> = h_pre.iter().map(|&v| silu(v)).collect();
        let mut h2 = vec![0.0; ch * hw];
        conv3x3(
            &b,
            ch,
            side,
            side,
            &self.w[off.w2..off.w2 + ch * ch * 9],
            &self.w[off.b2..off.b2 + ch],
            ch,
            &mut h2,
        );
        let out: Vec<f64> = x_in.iter().zip(h2.iter()).map(|(x, h)| x + h).collect();
        (
            out,
            BlockTrace {
                x_in,
                a,
                h_pre,
                b,
            },
        )
    }

    /// Predict the injected noise for a 64×64 input at timestep `t`,
    /// keeping the intermediate activations for a later backward pass.
    pub fn forward_with_trace(&self, input: &[f64], t: usize) -> (Vec<f64>, Trace) {
        let cfg = self.cfg;
        let e = cfg.time_embed_dim;
        let hw0 = PATCH_SIZE * PATCH_SIZE;
        debug_assert_eq!(input.len(), hw0);

        let sin_emb = sinusoidal_embedding(t, e);
        let mut t1_pre = vec![0.0; e];
        linear(
            &sin_emb,
            &self.w[self.off.t1w..self.off.t1w + e * e],
            &self.w[self.off.t1b..self.off.t1b + e],
            &mut t1_pre,
        );
        let t1_act: Vec<f64> = t1_pre.iter().map(|&v| silu(v)).collect();
        let mut temb_pre = vec![0.0; e];
        linear(
            &t1_act,
            &self.w[self.off.t2w..self.off.t2w + e * e],
            &self.w[self.off.t2b..self.off.t2b + e],
            &mut temb_pre,
        );
        let temb_act: Vec<f64> = temb_pre.iter().map(|&v| silu(v)).collect();

        let c0 = cfg.channels(0);
        let mut cur = vec![0.0; c0 * hw0];
        conv3x3(
            input,
            1,
            PATCH_SIZE,
            PATCH_SIZE,
            &self.w[self.off.stem_w..self.off.stem_w + c0 * 9],
            &self.w[self.off.stem_b..self.off.stem_b + c0],
            c0,
            &mut cur,
        );

        let mut enc_traces = Vec::with_capacity(cfg.depth - 1);
        let mut skips = Vec::with_capacity(cfg.depth - 1);
        for l in 0..cfg.depth - 1 {
            let ch = cfg.channels(l);
            let side = cfg.side(l);
            let (out, tr) = self.resblock(self.off.enc[l], cur, &temb_act, ch, side);
            enc_traces.push(tr);
            skips.push(out.clone());
            let next = cfg.channels(l + 1);
            let side2 = side / 2;
            let mut down = vec![0.0; next * side2 * side2];
            conv3x3_s2(
                &out,
                ch,
                side,
                side,
                &self.w[self.off.down[l].0..self.off.down[l].0 + next * ch * 9],
                &self.w[self.off.down[l].1..self.off.down[l].1 + next],
                next,
                &mut down,
            );
            cur = down;
        }

        let chm = cfg.channels(cfg.depth - 1);
        let sidem = cfg.side(cfg.depth - 1);
        let (mid_out, mid_trace) = self.resblock(self.off.mid, cur, &temb_act, chm, sidem);
        cur = mid_out;

        let mut up_in = vec![Vec::new(); cfg.depth.saturating_sub(1)];
        let mut dec_traces: Vec<Option<BlockTrace>> = (0..cfg.depth.saturating_sub(1))
            .map(|_| None)
            .collect();
        for l in (0..cfg.depth - 1).rev() {
            let ch = cfg.channels(l);
            let deeper = cfg.channels(l + 1);
            let side = cfg.side(l);
            let mut upsampled = vec![0.0; deeper * side * side];
            upsample2(&cur, deeper, side / 2, side / 2, &mut upsampled);
            let mut conv_out = vec![0.0; ch * side * side];
            conv3x3(
                &upsampled,
                deeper,
                side,
                side,
                &self.w[self.off.up[l].0..self.off.up[l].0 + ch * deeper * 9],
                &self.w[self.off.up[l].1..self.off.up[l].1 + ch],
                ch,
                &mut conv_out,
            );
            up_in[l] = upsampled;
            for (o, s) in conv_out.iter_mut().zip(skips[l].iter()) {
                *o += s;
            }
            let (out, tr) = self.resblock(self.off.dec[l], conv_out, &temb_act, ch, side);
            dec_traces[l] = Some(tr);
            cur = out;
        }
        let dec = dec_traces.into_iter().map(|t| t.unwrap()).collect();

        let mut out = vec![0.0; hw0];
        conv3x3(
            &cur,
            c0,
            PATCH_SIZE,
            PATCH_SIZE,
            &self.w[self.off.head_w..self.off.head_w + c0 * 9],
            &self.w[self.off.head_b..self.off.head_b + 1],
            1,
            &mut out,
        );

        (
            out,
            Trace {
                sin_emb,
                t1_pre,
                t1_act,
                temb_pre,
                temb_act,
                input: input.to_vec(),
                enc: enc_traces,
                skips,
                mid: mid_trace,
                up_in,
                dec,
                head_in: cur,
            },
        )
    }

    /// Predict the injected noise (no trace retained).
    pub fn forward(&self, input: &[f64], t: usize) -> Vec<f64> {
        self.forward_with_trace(input, t).0
    }

    /// Backpropagate `d_out` (gradient at the network output) through the
    /// trace, accumulating parameter gradients into `grad`.
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grad: &mut [f64]) {
        let cfg = self.cfg;
        let e = cfg.time_embed_dim;
        let c0 = cfg.channels(0);
        debug_assert_eq!(grad.len(), self.off.total);
        let mut d_temb_act = vec![0.0; e];

        // head
        conv3x3_back_weights(
            &trace.head_in,
            c0,
            PATCH_SIZE,
            PATCH_SIZE,
            d_out,
            1,
            &mut grad[self.off.head_w..self.off.head_b + 1],
        );
        let mut d_cur = vec![0.0; c0 * PATCH_SIZE * PATCH_SIZE];
        conv3x3_back_input(
            d_out,
            1,
            PATCH_SIZE,
            PATCH_SIZE,
            &self.w[self.off.head_w..self.off.head_w + c0 * 9],
            c0,
            &mut d_cur,
        );

        // decoder levels in reverse of their forward execution (l = 0 ran last)
        let mut d_skips: Vec<Vec<f64>> = Vec::new();
        for l in 0..cfg.depth - 1 {
            d_skips.push(vec![
                0.0;
                cfg.channels(l) * cfg.side(l) * cfg.side(l)
            ]);
        }
        for l in 0..cfg.depth - 1 {
            let ch = cfg.channels(l);
            let deeper = cfg.channels(l + 1);
            let side = cfg.side(l);
            let d_dec_in = self.resblock_back(
                self.off.dec[l],
                &trace.dec[l],
                &d_cur,
                &trace.temb_act,
                ch,
                side,
                grad,
                &mut d_temb_act,
            );
            // dec input = up conv out + skip
            for (s, d) in d_skips[l].iter_mut().zip(d_dec_in.iter()) {
                *s += d;
            }
            conv3x3_back_weights(
                &trace.up_in[l],
                deeper,
                side,
                side,
                &d_dec_in,
                ch,
                &mut grad[self.off.up[l].0..self.off.up[l].1 + ch],
            );
            let mut d_upsampled = vec![0.0; deeper * side * side];
            conv3x3_back_input(
                &d_dec_in,
                ch,
                side,
                side,
                &self.w[self.off.up[l].0..self.off.up[l].0 + ch * deeper * 9],
                deeper,
                &mut d_upsampled,
            );
            let mut d_below = vec![0.0; deeper * (side / 2) * (side / 2)];
            upsample2_back(&d_upsampled, deeper, side / 2, side / 2, &mut d_below);
            d_cur = d_below;
        }

        // middle block
        let chm = cfg.channels(cfg.depth - 1);
        let sidem = cfg.side(cfg.depth - 1);
        d_cur = self.resblock_back(
            self.off.mid,
            &trace.mid,
            &d_cur,
            &trace.temb_act,
            chm,
            sidem,
            grad,
            &mut d_temb_act,
        );

        // encoder levels in reverse of forward order
        for l in (0..cfg.depth - 1).rev() {
            let ch = cfg.channels(l);
            let next = cfg.channels(l + 1);
            let side = cfg.side(l);
            conv3x3_s2_back_weights(
                &trace.skips[l],
                ch,
                side,
                side,
                &d_cur,
                next,
                &mut grad[self.off.down[l].0..self.off.down[l].1 + next],
            );
            let mut d_enc_out = vec![0.0; ch * side * side];
            conv3x3_s2_back_input(
                &d_cur,
                next,
                side,
                side,
                &self.w[self.off.down[l].0..self.off.down[l].0 + next * ch * 9],
                ch,
                &mut d_enc_out,
            );
            for (d, s) in d_enc_out.iter_mut().zip(d_skips[l].iter()) {
                *d += s;
            }
            d_cur = self.resblock_back(
                self.off.enc[l],
                &trace.enc[l],
                &d_enc_out,
                &trace.temb_act,
                ch,
                side,
                grad,
                &mut d_temb_act,
            );
        }

        // stem
        conv3x3_back_weights(
            &trace.input,
            1,
            PATCH_SIZE,
            PATCH_SIZE,
            &d_cur,
            c0,
            &mut grad[self.off.stem_w..self.off.stem_b + c0],
        );

        // time-embedding trunk
        let mut d_temb_pre = d_temb_act;
        for (d, &pre) in d_temb_pre.iter_mut().zip(trace.temb_pre.iter()) {
            *d *= silu_prime(pre);
        }
        let mut d_t1_act = vec![0.0; e];
        linear_back(
            &trace.t1_act,
            &self.w[self.off.t2w..self.off.t2w + e * e],
            &d_temb_pre,
            &mut grad[self.off.t2w..self.off.t2b + e],
            &mut d_t1_act,
        );
        let mut d_t1_pre = d_t1_act;
        for (d, &pre) in d_t1_pre.iter_mut().zip(trace.t1_pre.iter()) {
            *d *= silu_prime(pre);
        }
        let mut d_sin = vec![0.0; e];
        linear_back(
            &trace.sin_emb,
            &self.w[self.off.t1w..self.off.t1w + e * e],
            &d_t1_pre,
            &mut grad[self.off.t1w..self.off.t1b + e],
            &mut d_sin,
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn resblock_back(
        &self,
        off: BlockOff,
        trace: &BlockTrace,
        d_out: &[f64],
        temb_act: &[f64],
        ch: usize,
        side: usize,
        grad: &mut [f64],
        d_temb_act: &mut [f64],
    ) -> Vec<f64> {
        let hw = side * side;
        let e = self.cfg.time_embed_dim;
        conv3x3_back_weights(
            &trace.b,
            ch,
            side,
            side,
            d_out,
            ch,
            &mut grad[off.w2..off.b2 + ch],
        );
        let mut d_b = vec![0.0; ch * hw];
        conv3x3_back_input(
            d_out,
            ch,
            side,
            side,
            &self.w[off.w2..off.w2 + ch * ch * 9],
            ch,
            &mut d_b,
        );
        let mut d_hpre = d_b;
        for (d, &pre) in d_hpre.iter_mut().zip(trace.h_pre.iter()) {
            *d *= silu_prime(pre);
        }
        let mut d_tbias = vec![0.0; ch];
        for c in 0..ch {
            d_tbias[c] = d_hpre[c * hw..(c + 1) * hw].iter().sum();
        }
        linear_back(
            temb_act,
            &self.w[off.lw..off.lw + ch * e],
            &d_tbias,
            &mut grad[off.lw..off.lb + ch],
            d_temb_act,
        );
        conv3x3_back_weights(
            &trace.a,
            ch,
            side,
            side,
            &d_hpre,
            ch,
            &mut grad[off.w1..off.b1 + ch],
        );
        let mut d_a = vec![0.0; ch * hw];
        conv3x3_back_input(
            &d_hpre,
            ch,
            side,
            side,
            &self.w[off.w1..off.w1 + ch * ch * 9],
            ch,
            &mut d_a,
        );
        d_out
            .iter()
            .zip(d_a.iter().zip(trace.x_in.iter()))
            .map(|(&d, (&da, &x))| d + da * silu_prime(x))
            .collect()
    }
}
