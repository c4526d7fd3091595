//! Experiment orchestration: configuration, dataset assembly, sweep
//! execution, and the file formats the sweeps read and write (RIRB
//! matrices, 16-bit PGM images, CSV results, SVG charts).

mod config;
mod dataset;
mod experiment;
mod pgm;
mod plot;
mod rirb;

pub use config::{ExperimentConfig, TrainSettings};
pub use dataset::{
    build_training_set, load_patches, make_stripe_dataset, save_patches, stripe_patch,
};
pub use experiment::{
    run_experiment, CellOutcome, ExperimentOutput, METHOD_INPAINTING, METHOD_SCI,
};
pub use pgm::{export_rir_image, load_pgm, PgmSidecar};
pub use plot::{line_chart_svg, plot_csv, Series, SweepAxis};
pub use rirb::{load_rirb, save_rirb, sidecar_path, RirSidecar, RIRB_VERSION};
