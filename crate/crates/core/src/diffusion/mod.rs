//! Denoising diffusion over 64×64 RIR patches: noise schedule, a compact
//! noise-prediction network with hand-written backprop, training, and
//! mask-conditioned inpainting with resampling.

mod checkpoint;
mod denoiser;
mod repaint;
mod schedule;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use denoiser::{
    init_weights, param_count, sinusoidal_embedding, Denoiser, DenoiserConfig, DenoiserParams,
    TrainingMeta,
};
pub use repaint::{inpaint_matrix, repaint_inpaint, RepaintConfig};
pub use schedule::{NoiseSchedule, ScheduleSpec};
pub use train::{fingerprint_patches, train, PatchDataset, TrainConfig, TrainOutcome};
