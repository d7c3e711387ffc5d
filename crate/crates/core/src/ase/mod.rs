//! The denoising convolutional autoencoder that maps a low-resolution frame to
//! a full-resolution 3 × 256 frame.

mod checkpoint;
mod config;
mod model;
mod train;

pub use config::{build_config, AseConfig};
pub use model::{mae_loss, AseModel, Conv3x3, Dense, Params};
pub use train::{dataset_mae, train, validation_size, EpochStats, TrainReport, TrainSpec, TrainedAse, MIN_PAIRS, VAL_FRACTION};
