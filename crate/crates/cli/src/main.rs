//! `rir` — simulate shoebox-room impulse responses, train the diffusion
//! inpainter, reconstruct masked microphone arrays, and run evaluation
//! sweeps. Every run is reproducible from a JSON config plus the seeds
//! given on the command line; any config field can be overridden by a
//! flag.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rir_core::baseline::sci_interpolate;
use rir_core::diffusion::{
    inpaint_matrix, load_checkpoint, save_checkpoint, train, NoiseSchedule,
};
use rir_core::harness::{
    build_training_set, export_rir_image, load_patches, load_rirb, make_stripe_dataset,
    plot_csv, run_experiment, save_patches, save_rirb, ExperimentConfig, SweepAxis,
};
use rir_core::imaging::make_mask;
use rir_core::metrics::{edc_db, evaluate, t60_from_edc, ConfigKey};
use rir_core::room_sim::{
    make_arc_array, reflection_coeff_for_t60, simulate_matrix, source_at_angle,
};

#[derive(Parser)]
#[command(name = "rir", version, about = "Room impulse response interpolation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config selection and field-level overrides, shared by all subcommands.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON config file; defaults to the built-in profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in profile when no --config is given: "full" or "desk".
    #[arg(long, default_value = "desk", global = true)]
    profile: String,

    #[arg(long, global = true)]
    room_dims: Option<String>,
    #[arg(long, global = true)]
    sample_rate: Option<f64>,
    #[arg(long, global = true)]
    speed_of_sound: Option<f64>,
    #[arg(long, global = true)]
    n_mics: Option<usize>,
    /// Comma-separated curvature list, e.g. "0,0.5,1".
    #[arg(long, global = true)]
    curvatures: Option<String>,
    /// Comma-separated source angles in degrees.
    #[arg(long, global = true)]
    angles: Option<String>,
    /// Comma-separated mask ratios.
    #[arg(long, global = true)]
    mask_ratios: Option<String>,
    /// Comma-separated per-cell seeds for sweeps.
    #[arg(long, global = true)]
    seeds: Option<String>,
    #[arg(long, global = true)]
    k_train: Option<usize>,
    #[arg(long, global = true)]
    k_infer: Option<usize>,
    #[arg(long, global = true)]
    t60_train: Option<f64>,
    #[arg(long, global = true)]
    t60_infer: Option<f64>,
    #[arg(long, global = true)]
    n_training_images: Option<usize>,
    #[arg(long, global = true)]
    n_training_patches: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    base_channels: Option<usize>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    time_embed_dim: Option<usize>,
    #[arg(long, global = true)]
    t_steps: Option<usize>,
    #[arg(long, global = true)]
    beta_start: Option<f64>,
    #[arg(long, global = true)]
    beta_end: Option<f64>,
    #[arg(long, global = true)]
    jump_length: Option<usize>,
    #[arg(long, global = true)]
    n_resamples: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().context("bad number in list"))
        .collect()
}

impl ConfigArgs {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => match self.profile.as_str() {
                "desk" => ExperimentConfig::desk(),
                "full" => ExperimentConfig::default(),
                other => bail!("unknown profile {other} (expected desk|full)"),
            },
        };
        if let Some(s) = &self.room_dims {
            let d = parse_list(s)?;
            if d.len() != 3 {
                bail!("--room-dims needs three comma-separated numbers");
            }
            cfg.room_dims = (d[0], d[1], d[2]);
        }
        if let Some(v) = self.sample_rate {
            cfg.sample_rate = v;
        }
        if let Some(v) = self.speed_of_sound {
            cfg.speed_of_sound = v;
        }
        if let Some(v) = self.n_mics {
            cfg.n_mics = v;
        }
        if let Some(s) = &self.curvatures {
            cfg.curvatures = parse_list(s)?;
        }
        if let Some(s) = &self.angles {
            cfg.source_angles_deg = parse_list(s)?;
        }
        if let Some(s) = &self.mask_ratios {
            cfg.mask_ratios = parse_list(s)?;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_list(s)?.into_iter().map(|v| v as u64).collect();
        }
        if let Some(v) = self.k_train {
            cfg.k_train = v;
        }
        if let Some(v) = self.k_infer {
            cfg.k_infer = v;
        }
        if let Some(v) = self.t60_train {
            cfg.t60_train = v;
        }
        if let Some(v) = self.t60_infer {
            cfg.t60_infer = v;
        }
        if let Some(v) = self.n_training_images {
            cfg.n_training_images = v;
        }
        if let Some(v) = self.n_training_patches {
            cfg.n_training_patches = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.base_channels {
            cfg.train.base_channels = v;
        }
        if let Some(v) = self.depth {
            cfg.train.depth = v;
        }
        if let Some(v) = self.time_embed_dim {
            cfg.train.time_embed_dim = v;
        }
        if let Some(v) = self.t_steps {
            cfg.train.t_steps = v;
        }
        if let Some(v) = self.beta_start {
            cfg.train.beta_start = v;
        }
        if let Some(v) = self.beta_end {
            cfg.train.beta_end = v;
        }
        if let Some(v) = self.jump_length {
            cfg.repaint.jump_length = v;
        }
        if let Some(v) = self.n_resamples {
            cfg.repaint.n_resamples = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one RIR matrix and write it as RIRB + JSON sidecar.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Arc curvature in [0, 1].
        #[arg(long, default_value_t = 0.0)]
        curvature: f64,
        /// Source angle in degrees (90 = broadside).
        #[arg(long, default_value_t = 90.0)]
        angle: f64,
        /// Target reverberation time; defaults to the inference T60.
        #[arg(long)]
        t60: Option<f64>,
        /// Truncation length; defaults to the inference K.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a training patch set (simulated RIRs, or --stripes for the toy set).
    Dataset {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
        /// Generate N synthetic stripe patches instead of simulating rooms.
        #[arg(long)]
        stripes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the denoiser on a patch set and write a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct missing microphones with the diffusion inpainter.
    Inpaint {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mask_ratio: f64,
        /// Seed for both the mask draw and the sampler.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct missing microphones with the spline baseline.
    Baseline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mask_ratio: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a reconstruction against ground truth over a mask's missing set.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        mask_ratio: f64,
        #[arg(long)]
        seed: u64,
        /// Print per-microphone scores.
        #[arg(long)]
        per_mic: bool,
        /// Write per-missing-mic EDC curves (CSV) and T60 estimates here.
        #[arg(long)]
        edc_dir: Option<PathBuf>,
    },
    /// Run the full (curvature × angle × ratio × seed) sweep.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        /// Base seed added to every per-cell seed from the config.
        #[arg(long)]
        seed: u64,
    },
    /// Re-chart an existing results CSV.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        /// ratio | curvature | angle
        #[arg(long, default_value = "ratio")]
        x: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Export a RIRB matrix as a 16-bit grayscale PGM image.
    ExportImage {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn fmt_db(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf (exact)".to_string()
    } else {
        format!("{v:.3}")
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            cfg,
            curvature,
            angle,
            t60,
            samples,
            out,
        } => {
            let cfg = cfg.build()?;
            let t60 = t60.unwrap_or(cfg.t60_infer);
            let samples = samples.unwrap_or(cfg.k_infer);
            let beta = reflection_coeff_for_t60(&cfg.room()?, t60)?;
            let room = cfg.room()?.with_uniform_reflection(beta)?;
            let array = make_arc_array(cfg.n_mics, curvature, &room)?;
            let source = source_at_angle(&room, &array, angle)?;
            let matrix = simulate_matrix(&room, &source, &array, samples)?;
            save_rirb(&out, &matrix, &room, None)?;
            println!(
                "wrote {} ({}×{} @ {} Hz, T60 target {t60} s, β {beta:.4})",
                out.display(),
                matrix.n_samples(),
                matrix.n_mics(),
                room.sample_rate
            );
        }
        Command::Dataset {
            cfg,
            seed,
            stripes,
            out,
        } => {
            let ds = match stripes {
                Some(n) => make_stripe_dataset(n, seed),
                None => build_training_set(&cfg.build()?, seed)?,
            };
            save_patches(&out, &ds)?;
            println!(
                "wrote {} ({} patches, fingerprint {})",
                out.display(),
                ds.patches.len(),
                &ds.fingerprint[..16]
            );
        }
        Command::Train {
            cfg,
            dataset,
            seed,
            out,
        } => {
            let cfg = cfg.build()?;
            let ds = load_patches(&dataset)?;
            let outcome = train(&ds, &cfg.train_config(), seed)?;
            save_checkpoint(&out, &outcome.params)?;
            let traj = &outcome.loss_trajectory;
            println!(
                "trained {} epochs: loss {:.5} → {:.5}; wrote {}",
                traj.len(),
                traj.first().unwrap(),
                traj.last().unwrap(),
                out.display()
            );
        }
        Command::Inpaint {
            cfg,
            model,
            input,
            mask_ratio,
            seed,
            out,
        } => {
            let cfg = cfg.build()?;
            let params = load_checkpoint(&model)?;
            let schedule: NoiseSchedule = params.schedule.build()?;
            let (matrix, sidecar) = load_rirb(&input)?;
            let mask = make_mask(matrix.n_mics(), mask_ratio, seed)?;
            let result = inpaint_matrix(&params, &schedule, &matrix, &mask, &cfg.repaint, seed)?;
            save_rirb(&out, &result, &sidecar.room, Some(seed))?;
            println!(
                "inpainted {} missing of {} mics → {}",
                mask.n_missing(),
                mask.len(),
                out.display()
            );
        }
        Command::Baseline {
            cfg: _,
            input,
            mask_ratio,
            seed,
            out,
        } => {
            let (matrix, sidecar) = load_rirb(&input)?;
            let mask = make_mask(matrix.n_mics(), mask_ratio, seed)?;
            let result = sci_interpolate(&matrix, &mask)?;
            save_rirb(&out, &result, &sidecar.room, Some(seed))?;
            println!(
                "spline-interpolated {} missing of {} mics → {}",
                mask.n_missing(),
                mask.len(),
                out.display()
            );
        }
        Command::Evaluate {
            cfg: _,
            truth,
            estimate,
            mask_ratio,
            seed,
            per_mic,
            edc_dir,
        } => {
            let (truth_m, _) = load_rirb(&truth)?;
            let (est_m, _) = load_rirb(&estimate)?;
            let mask = make_mask(truth_m.n_mics(), mask_ratio, seed)?;
            let key = ConfigKey {
                curvature: truth_m.geometry.curvature,
                angle_deg: truth_m.source.angle_deg,
                mask_ratio,
                seed,
                method: "evaluate".into(),
            };
            let report = evaluate(&truth_m, &est_m, &mask, key)?;
            println!("NMSE: {} dB", fmt_db(report.nmse_db));
            println!("CD:   {:.4}", report.cd);
            if per_mic {
                for m in &report.per_mic {
                    match (&m.nmse_db, &m.cd, &m.error) {
                        (Some(n), Some(c), _) => {
                            println!("  mic {:>3}: NMSE {} dB, CD {c:.4}", m.mic, fmt_db(*n))
                        }
                        (_, _, Some(e)) => println!("  mic {:>3}: error: {e}", m.mic),
                        _ => {}
                    }
                }
            }
            if let Some(dir) = edc_dir {
                std::fs::create_dir_all(&dir)?;
                for &mic in &mask.missing_indices() {
                    let h_true: Vec<f64> = truth_m.data.column(mic).to_vec();
                    let h_est: Vec<f64> = est_m.data.column(mic).to_vec();
                    let (et, ee) = (edc_db(&h_true)?, edc_db(&h_est)?);
                    let mut text = String::from("sample,edc_truth_db,edc_estimate_db\n");
                    for (i, (a, b)) in et.iter().zip(ee.iter()).enumerate() {
                        text.push_str(&format!("{i},{a:.4},{b:.4}\n"));
                    }
                    std::fs::write(dir.join(format!("edc_mic{mic:03}.csv")), text)?;
                    let fs_hz = truth_m.sample_rate;
                    match (t60_from_edc(&et, fs_hz), t60_from_edc(&ee, fs_hz)) {
                        (Ok(a), Ok(b)) => {
                            println!("  mic {mic:>3}: T60 truth {a:.3} s, estimate {b:.3} s")
                        }
                        (a, b) => println!(
                            "  mic {mic:>3}: T60 not measurable ({})",
                            a.err().or(b.err()).map(|e| e.to_string()).unwrap_or_default()
                        ),
                    }
                }
                println!("EDC curves written to {}", dir.display());
            }
        }
        Command::Sweep { cfg, model, seed } => {
            let mut cfg = cfg.build()?;
            cfg.seeds = cfg.seeds.iter().map(|s| s + seed).collect();
            let params = load_checkpoint(&model)?;
            let out = run_experiment(&cfg, &params)?;
            let errors = out.cells.iter().filter(|c| c.error.is_some()).count();
            println!(
                "{} cells ({} failed); results in {}",
                out.cells.len(),
                errors,
                out.csv_path.display()
            );
        }
        Command::Plot { csv, x, out_dir } => {
            let axis = SweepAxis::parse(&x)?;
            let files = plot_csv(&csv, axis, &out_dir)?;
            println!("wrote {} charts to {}", files.len(), out_dir.display());
        }
        Command::ExportImage { input, out } => {
            let (matrix, _) = load_rirb(&input)?;
            export_rir_image(&matrix, &out)?;
            println!(
                "wrote {} ({}×{} 16-bit PGM)",
                out.display(),
                matrix.n_mics(),
                matrix.n_samples()
            );
        }
    }
    Ok(())
}
