//! Scenario generation for renewable power farms.
//!
//! Day-shaped `parks × hours` matrices of normalized power are modeled by
//! three generators: a convolutional GAN trained with binary cross-entropy,
//! the same architecture trained as a weight-clipped Wasserstein critic pair,
//! and a Gaussian copula baseline. The [`eval`] module compares generated
//! scenarios with held-out days through kernel density estimates, symmetric
//! Kullback-Leibler divergence, Pearson correlation structure, daily energy
//! ("stress") integrals and terrain-grouped moments.
//!
//! Everything runs on `f64` on the CPU; the small reverse-mode engine in
//! [`tensor`] carries only the layers these networks need.

pub mod copula;
pub mod data;
pub mod error;
pub mod eval;
pub mod gan;
pub mod tensor;

pub(crate) mod rng;

pub use copula::CopulaModel;
pub use data::{FarmMeta, ScenarioDataset, SynthConfig, Terrain};
pub use error::{Error, Result};
pub use eval::{EvalReport, Pdf};
pub use gan::{GanConfig, LossKind, TrainedModel};
pub use tensor::{ConvSpec, Tensor};
