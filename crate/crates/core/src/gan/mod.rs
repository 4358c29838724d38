//! Convolutional generator/discriminator pairs trained with binary
//! cross-entropy or as a weight-clipped Wasserstein critic.

mod checkpoint;
mod config;
mod network;
mod train;

pub use checkpoint::CHECKPOINT_FORMAT;
pub use config::{GanConfig, LayerSpec, LossKind, Preset, DESK_CHANNELS, DESK_LEARNING_RATE, REFERENCE_CHANNELS};
pub use network::{Forward, Head, Layer, Network, Role};
pub use train::{train, train_with, EpochLoss, TrainedModel};

use crate::error::Result;

/// Generator bound to `parks × horizon`; fails with the computed chain if the
/// layers do not land there.
pub fn build_generator(config: &GanConfig, parks: usize, horizon: usize) -> Result<Network> {
    Network::generator(config, parks, horizon)
}

pub fn build_discriminator(config: &GanConfig, parks: usize, horizon: usize) -> Result<Network> {
    Network::discriminator(config, parks, horizon)
}
