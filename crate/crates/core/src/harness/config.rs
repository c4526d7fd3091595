//! Experiment configuration: one JSON-serializable struct that pins every
//! knob of a run — room, arrays, sources, masks, seeds, training and
//! inpainting hyperparameters — so a run is reproducible from the file
//! plus the seed set alone.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diffusion::{DenoiserConfig, RepaintConfig, ScheduleSpec, TrainConfig};
use crate::error::Result;
use crate::room_sim::RoomSpec;

/// Training hyperparameters as they appear in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub base_channels: usize,
    pub depth: usize,
    pub time_embed_dim: usize,
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

/// Full experiment description. `Default` is the full-scale profile;
/// [`ExperimentConfig::desk`] is the reduced profile that keeps a complete
/// sweep under roughly an hour on a workstation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub room_dims: (f64, f64, f64),
    pub sample_rate: f64,
    pub speed_of_sound: f64,
    pub n_mics: usize,
    /// Arc curvatures to sweep; 0 = linear, 1 = semi-circular.
    pub curvatures: Vec<f64>,
    pub source_angles_deg: Vec<f64>,
    pub mask_ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    /// RIR truncation lengths for the training and inference sets.
    pub k_train: usize,
    pub k_infer: usize,
    pub t60_train: f64,
    pub t60_infer: f64,
    pub n_training_images: usize,
    pub n_training_patches: usize,
    pub train: TrainSettings,
    pub repaint: RepaintConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            room_dims: (6.0, 5.5, 2.8),
            sample_rate: 8000.0,
            speed_of_sound: 343.0,
            n_mics: 64,
            curvatures: (0..10).map(|k| k as f64 / 9.0).collect(),
            source_angles_deg: (0..9).map(|k| 10.0 + 20.0 * k as f64).collect(),
            mask_ratios: (1..10).map(|k| k as f64 / 10.0).collect(),
            seeds: vec![0, 1, 2, 3, 4],
            k_train: 1024,
            k_infer: 2048,
            t60_train: 0.3,
            t60_infer: 0.6,
            n_training_images: 8,
            n_training_patches: 176,
            train: TrainSettings {
                epochs: 400,
                batch_size: 16,
                learning_rate: 1e-3,
                base_channels: 32,
                depth: 3,
                time_embed_dim: 64,
                t_steps: 1000,
                beta_start: 1e-4,
                beta_end: 0.02,
            },
            repaint: RepaintConfig {
                jump_length: 10,
                n_resamples: 10,
            },
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale profile: 100 diffusion steps (betas scaled ×10 to keep
    /// the accumulated noise equal to the full schedule), 3 resampling
    /// passes, the {0.3, 0.5, 0.7} mask subset, 5 seeds, and a smaller
    /// network and training budget.
    pub fn desk() -> Self {
        ExperimentConfig {
            mask_ratios: vec![0.3, 0.5, 0.7],
            train: TrainSettings {
                epochs: 150,
                batch_size: 16,
                learning_rate: 1e-3,
                base_channels: 8,
                depth: 3,
                time_embed_dim: 32,
                t_steps: 100,
                beta_start: 1e-3,
                beta_end: 0.2,
            },
            repaint: RepaintConfig {
                jump_length: 10,
                n_resamples: 3,
            },
            ..Self::default()
        }
    }

    /// The room without wall reflections set (callers pick a T60).
    pub fn room(&self) -> Result<RoomSpec> {
        let mut room = RoomSpec::new(self.room_dims, self.sample_rate)?;
        room.speed_of_sound = self.speed_of_sound;
        Ok(room)
    }

    pub fn schedule_spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            t_steps: self.train.t_steps,
            beta_start: self.train.beta_start,
            beta_end: self.train.beta_end,
        }
    }

    pub fn denoiser_config(&self) -> DenoiserConfig {
        DenoiserConfig {
            base_channels: self.train.base_channels,
            depth: self.train.depth,
            time_embed_dim: self.train.time_embed_dim,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            arch: self.denoiser_config(),
            schedule: self.schedule_spec(),
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
