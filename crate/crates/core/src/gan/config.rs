use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ConvSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Binary cross-entropy (DC-GAN).
    Bce,
    /// Weight-clipped critic (DC-WGAN).
    Wasserstein,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Bce => "bce",
            LossKind::Wasserstein => "wasserstein",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bce" | "dcgan" | "dc-gan" => Ok(LossKind::Bce),
            "wasserstein" | "wgan" | "dcwgan" | "dc-wgan" => Ok(LossKind::Wasserstein),
            _ => Err(Error::config(format!("unknown loss kind {s:?}"))),
        }
    }
}

/// Geometry of one generator layer; channel counts come from the plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl LayerSpec {
    pub const fn new(kernel: (usize, usize), stride: (usize, usize), padding: (usize, usize)) -> Self {
        LayerSpec {
            kernel,
            stride,
            padding,
        }
    }
}

/// Named generator geometries for the four reference datasets plus the
/// 8 × 24 desk-scale layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 32 farms × 24 h.
    EuropeWind2015,
    /// 16 farms × 8 steps.
    GermanSolar2015,
    /// 48 farms × 24 h.
    GermanWind2017,
    /// 48 farms × 8 steps.
    GermanSolar2017,
    /// 8 farms × 24 h.
    DeskWind,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::EuropeWind2015,
        Preset::GermanSolar2015,
        Preset::GermanWind2017,
        Preset::GermanSolar2017,
        Preset::DeskWind,
    ];

    /// `(parks, horizon)` produced by the preset.
    pub fn target(self) -> (usize, usize) {
        match self {
            Preset::EuropeWind2015 => (32, 24),
            Preset::GermanSolar2015 => (16, 8),
            Preset::GermanWind2017 => (48, 24),
            Preset::GermanSolar2017 => (48, 8),
            Preset::DeskWind => (8, 24),
        }
    }

    pub fn layers(self) -> Vec<LayerSpec> {
        let l = LayerSpec::new;
        let tail = [l((4, 4), (2, 2), (1, 1)), l((4, 4), (2, 2), (1, 1))];
        let last_2015 = l((4, 4), (2, 2), (1, 1));
        let last_2017 = l((4, 4), (4, 2), (0, 1));
        let first = match self {
            Preset::EuropeWind2015 => l((4, 3), (1, 1), (0, 0)),
            Preset::GermanSolar2015 => l((2, 1), (1, 1), (0, 0)),
            Preset::GermanWind2017 => l((3, 3), (1, 1), (0, 0)),
            Preset::GermanSolar2017 => l((3, 1), (1, 1), (0, 0)),
            Preset::DeskWind => l((1, 3), (1, 1), (0, 0)),
        };
        let last = match self {
            Preset::GermanWind2017 | Preset::GermanSolar2017 => last_2017,
            _ => last_2015,
        };
        vec![first, tail[0], tail[1], last]
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Ok(match key.as_str() {
            "europewind2015" | "europewindfarm2015" => Preset::EuropeWind2015,
            "germansolar2015" | "germansolarfarm2015" => Preset::GermanSolar2015,
            "germanwind2017" | "germanwindfarm2017" => Preset::GermanWind2017,
            "germansolar2017" | "germansolarfarm2017" => Preset::GermanSolar2017,
            "deskwind" | "desk" => Preset::DeskWind,
            _ => return Err(Error::config(format!("unknown preset {s:?}"))),
        })
    }
}

/// Channel plan of the full-size networks.
pub const REFERENCE_CHANNELS: [usize; 5] = [100, 256, 128, 64, 1];

/// Narrower plan used for desk-scale runs on a single CPU core.
pub const DESK_CHANNELS: [usize; 5] = [100, 64, 32, 16, 1];

/// Learning rate of desk-scale runs. With only ~2000 epochs the reference
/// 2e-5 leaves the generator far from the data.
pub const DESK_LEARNING_RATE: f64 = 1e-4;

/// Everything needed to build and train a generator/discriminator pair.
/// Fields missing from a deserialized config take their values from
/// [`GanConfig::default`], the desk-scale wasserstein setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanConfig {
    /// Generator layers, latent side first.
    pub layers: Vec<LayerSpec>,
    /// Generator channels, latent width first and `1` last.
    pub channel_plan: Vec<usize>,
    pub loss_kind: LossKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Critic steps per generator step (wasserstein only).
    pub critic_iters: usize,
    /// Weight clip bound of the critic (wasserstein only).
    pub clip_c: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig::desk(LossKind::Wasserstein)
    }
}

impl GanConfig {
    /// Full-width preset with the reference hyperparameters and desk-scale
    /// epoch count.
    pub fn preset(preset: Preset, loss_kind: LossKind) -> Self {
        GanConfig {
            layers: preset.layers(),
            channel_plan: REFERENCE_CHANNELS.to_vec(),
            loss_kind,
            epochs: 2000,
            learning_rate: 2e-5,
            batch_size: 64,
            critic_iters: 5,
            clip_c: 0.01,
            seed: 0,
        }
    }

    /// The 8 × 24 desk layout with the narrow channel plan.
    pub fn desk(loss_kind: LossKind) -> Self {
        GanConfig {
            channel_plan: DESK_CHANNELS.to_vec(),
            learning_rate: DESK_LEARNING_RATE,
            ..GanConfig::preset(Preset::DeskWind, loss_kind)
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.channel_plan[0]
    }

    /// Checks every field that does not depend on the dataset.
    pub fn validate(&self) -> Result<()> {
        let n = self.layers.len();
        if n == 0 {
            return Err(Error::config("gan.layers: at least one layer is required"));
        }
        if self.channel_plan.len() != n + 1 {
            return Err(Error::config(format!(
                "gan.channel_plan: {} layers need {} channel entries, got {}",
                n,
                n + 1,
                self.channel_plan.len()
            )));
        }
        if self.channel_plan.contains(&0) {
            return Err(Error::config("gan.channel_plan: channel counts must be positive"));
        }
        if self.channel_plan[n] != 1 {
            return Err(Error::config(format!(
                "gan.channel_plan: last entry must be 1 (single-channel output), got {}",
                self.channel_plan[n]
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.kernel.0 == 0 || l.kernel.1 == 0 || l.stride.0 == 0 || l.stride.1 == 0 {
                return Err(Error::config(format!(
                    "gan.layers[{i}]: kernel and stride must be positive"
                )));
            }
        }
        if self.epochs == 0 {
            return Err(Error::config("gan.epochs: must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "gan.learning_rate: must be a positive number, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::config(format!(
                "gan.batch_size: batch normalization needs at least 2, got {}",
                self.batch_size
            )));
        }
        if self.loss_kind == LossKind::Wasserstein {
            if self.critic_iters == 0 {
                return Err(Error::config("gan.critic_iters: must be positive"));
            }
            if !(self.clip_c > 0.0 && self.clip_c.is_finite()) {
                return Err(Error::config(format!(
                    "gan.clip_c: must be a positive number, got {}",
                    self.clip_c
                )));
            }
        }
        Ok(())
    }

    /// Generator layers as transposed-convolution specs.
    pub fn generator_specs(&self) -> Vec<ConvSpec> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| ConvSpec::new(self.channel_plan[i], self.channel_plan[i + 1], l.kernel, l.stride, l.padding))
            .collect()
    }

    /// Discriminator channels: the reversed plan with a single-channel head
    /// in place of the latent width.
    pub fn discriminator_channels(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.channel_plan.iter().rev().copied().collect();
        if let Some(last) = c.last_mut() {
            *last = 1;
        }
        c
    }

    /// Discriminator layers: the generator layers in reverse order as
    /// forward convolutions.
    pub fn discriminator_specs(&self) -> Vec<ConvSpec> {
        let c = self.discriminator_channels();
        self.layers
            .iter()
            .rev()
            .enumerate()
            .map(|(i, l)| ConvSpec::new(c[i], c[i + 1], l.kernel, l.stride, l.padding))
            .collect()
    }

    /// Spatial sizes through the generator, starting at the 1 × 1 latent.
    pub fn generator_chain(&self) -> Result<Vec<(usize, usize)>> {
        let mut chain = vec![(1, 1)];
        for (i, spec) in self.generator_specs().iter().enumerate() {
            let (h, w) = chain[i];
            let next = spec
                .transposed_output(h, w)
                .map_err(|e| Error::config(format!("gan.layers[{i}]: {e}")))?;
            chain.push(next);
        }
        Ok(chain)
    }

    /// Checks that the generator lands exactly on `parks × horizon` and the
    /// discriminator reduces it back to 1 × 1 through the same sizes.
    pub fn check_shape(&self, parks: usize, horizon: usize) -> Result<()> {
        self.validate()?;
        let chain = self.generator_chain()?;
        let fmt_chain = |c: &[(usize, usize)]| c.iter().map(|(h, w)| format!("{h}×{w}")).collect::<Vec<_>>().join(" → ");
        if *chain.last().unwrap() != (parks, horizon) {
            return Err(Error::config(format!(
                "generator chain {} does not end at {parks}×{horizon}",
                fmt_chain(&chain)
            )));
        }
        let mut back = vec![(parks, horizon)];
        for (i, spec) in self.discriminator_specs().iter().enumerate() {
            let (h, w) = back[i];
            let next = spec
                .conv_output(h, w)
                .map_err(|e| Error::config(format!("discriminator layer {i}: {e}")))?;
            back.push(next);
        }
        let mut expect = chain.clone();
        expect.reverse();
        if back != expect {
            return Err(Error::config(format!(
                "discriminator chain {} does not mirror generator chain {}",
                fmt_chain(&back),
                fmt_chain(&chain)
            )));
        }
        Ok(())
    }
}
