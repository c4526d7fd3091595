//! Mask-conditioned inpainting at inference time.
//!
//! Reverse diffusion where, at every step, the known region is replaced by
//! a forward-process sample of the observed content at the target
//! timestep and merged with the generated unknown region. Every
//! `jump_length` steps the sampler re-noises back up and re-descends
//! (`n_resamples` passes per segment) to harmonize the two regions. The
//! final output overwrites known pixels with the exact input values.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::denoiser::{Denoiser, DenoiserParams};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::imaging::{complete_matrix, split_patches, Mask, PATCH_SIZE};
use crate::room_sim::RirMatrix;

/// Resampling parameters. `jump_length` is how many steps each
/// harmonization segment spans; `n_resamples` is how many times each
/// segment is traversed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RepaintConfig {
    pub jump_length: usize,
    pub n_resamples: usize,
}

impl RepaintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.jump_length == 0 || self.n_resamples == 0 {
            return Err(Error::InvalidInput(
                "jump_length and n_resamples must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The timestep sequence visited by the sampler, starting from T.
/// Consecutive entries differ by ±1: −1 is a denoising step, +1 is a
/// re-noising step.
fn jump_schedule(t_steps: usize, jump_length: usize, n_resamples: usize) -> Vec<usize> {
    let mut remaining: std::collections::HashMap<usize, usize> = (0..t_steps
        .saturating_sub(jump_length))
        .step_by(jump_length)
        .map(|site| (site, n_resamples - 1))
        .collect();
    let mut seq = Vec::new();
    let mut t = t_steps;
    while t >= 1 {
        t -= 1;
        seq.push(t);
        if let Some(count) = remaining.get_mut(&t) {
            if *count > 0 {
                *count -= 1;
                for _ in 0..jump_length {
                    t += 1;
                    seq.push(t);
                }
            }
        }
    }
    seq
}

/// Inpaint one 64×64 patch. `masked_patch` holds the known pixel values
/// and zeros elsewhere; `known` marks which pixels are observed.
pub fn repaint_inpaint(
    params: &DenoiserParams,
    schedule: &NoiseSchedule,
    masked_patch: &Array2<f64>,
    known: &Array2<bool>,
    repaint: &RepaintConfig,
    seed: u64,
) -> Result<Array2<f64>> {
    repaint.validate()?;
    if masked_patch.dim() != (PATCH_SIZE, PATCH_SIZE) || known.dim() != (PATCH_SIZE, PATCH_SIZE) {
        return Err(Error::Shape(format!(
            "patch is {:?} and mask is {:?}, expected 64×64",
            masked_patch.dim(),
            known.dim()
        )));
    }
    if known.iter().all(|&k| k) {
        return Ok(masked_patch.clone());
    }

    let net = Denoiser::from_params(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_steps = schedule.len();
    let hw = PATCH_SIZE * PATCH_SIZE;
    let x0: Vec<f64> = masked_patch.iter().copied().collect();
    let known_flat: Vec<bool> = known.iter().copied().collect();

    let mut x: Vec<f64> = (0..hw).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut t_cur = t_steps;
    for &t_next in jump_schedule(t_steps, repaint.jump_length, repaint.n_resamples).iter() {
        if t_next + 1 == t_cur {
            // denoise t_cur → t_next
            let eps = net.forward(&x, t_cur);
            let beta = schedule.beta(t_cur);
            let alpha = 1.0 - beta;
            let ab_cur = schedule.alpha_bar(t_cur);
            let ab_next = schedule.alpha_bar(t_next);
            let coef = beta / (1.0 - ab_cur).sqrt();
            let inv_sqrt_alpha = 1.0 / alpha.sqrt();
            let var = schedule.posterior_variance(t_cur);
            let sigma = var.sqrt();

            let (s0, s1) = (ab_next.sqrt(), (1.0 - ab_next).sqrt());
            for i in 0..hw {
                if known_flat[i] {
                    // forward-process sample of the known content at t_next
                    x[i] = if t_next == 0 {
                        x0[i]
                    } else {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        s0 * x0[i] + s1 * z
                    };
                } else {
                    let mean = inv_sqrt_alpha * (x[i] - coef * eps[i]);
                    x[i] = if sigma > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mean + sigma * z
                    } else {
                        mean
                    };
                }
            }
        } else if t_next == t_cur + 1 {
            // re-noise one step: x_{t+1} = √(1−β)·x_t + √β·ε
            let beta = schedule.beta(t_next);
            let (sa, sb) = ((1.0 - beta).sqrt(), beta.sqrt());
            for v in x.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = sa * *v + sb * z;
            }
        } else {
            unreachable!("jump schedule moves by one step at a time");
        }
        t_cur = t_next;
    }
    debug_assert_eq!(t_cur, 0);

    let mut out = Array2::zeros((PATCH_SIZE, PATCH_SIZE));
    for (i, v) in out.iter_mut().enumerate() {
        *v = if known_flat[i] {
            x0[i]
        } else {
            x[i].clamp(-1.0, 1.0)
        };
    }
    Ok(out)
}

/// Mix of a base seed and a patch index into an independent stream seed.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Inpaint a full RIR matrix: split into patches, repaint each missing
/// region independently (per-patch RNG streams derived from the seed and
/// patch index), reassemble, and copy measured columns back verbatim.
pub fn inpaint_matrix(
    params: &DenoiserParams,
    schedule: &NoiseSchedule,
    matrix: &RirMatrix,
    mask: &Mask,
    repaint: &RepaintConfig,
    seed: u64,
) -> Result<RirMatrix> {
    repaint.validate()?;
    if mask.n_missing() == 0 {
        return Ok(matrix.clone());
    }
    let grid = split_patches(matrix, mask)?;
    let inpainted: Vec<Array2<f64>> = grid
        .patches
        .par_iter()
        .enumerate()
        .map(|(idx, patch)| {
            repaint_inpaint(
                params,
                schedule,
                &patch.pixels,
                &patch.known,
                repaint,
                derive_seed(seed, idx as u64),
            )
        })
        .collect::<Result<_>>()?;
    let image = crate::imaging::reassemble(&grid, &inpainted)?;
    complete_matrix(matrix, mask, &image)
}
