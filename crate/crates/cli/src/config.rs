//! TOML payloads of the four commands. Relative paths inside a config file
//! resolve against the directory holding that file.

use std::fs;
use std::path::{Path, PathBuf};

use renewgan_core::data::SynthConfig;
use renewgan_core::gan::{GanConfig, LossKind, Preset, REFERENCE_CHANNELS};
use renewgan_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let body = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&body).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_end())))
}

/// Directory relative config paths are anchored to.
pub fn base_dir(config: Option<&Path>) -> PathBuf {
    config
        .and_then(|p| p.parent())
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRun {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub synth: SynthConfig,
}

/// Where training data comes from.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DataSource {
    /// A directory written by `synth` or `train`.
    Archive { archive: PathBuf },
    /// Raw timestamped measurements plus farm metadata.
    Csv {
        csv: PathBuf,
        meta: PathBuf,
        #[serde(default = "one_hour")]
        resolution_hours: f64,
    },
}

fn one_hour() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dcgan,
    Dcwgan,
    Copula,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dcgan => "dcgan",
            ModelKind::Dcwgan => "dcwgan",
            ModelKind::Copula => "copula",
        }
    }

    pub fn loss_kind(self) -> Option<LossKind> {
        match self {
            ModelKind::Dcgan => Some(LossKind::Bce),
            ModelKind::Dcwgan => Some(LossKind::Wasserstein),
            ModelKind::Copula => None,
        }
    }
}

/// `[gan]` table: any [`GanConfig`] field, on top of the preset.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanOverrides {
    pub layers: Option<Vec<renewgan_core::gan::LayerSpec>>,
    pub channel_plan: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub critic_iters: Option<usize>,
    pub clip_c: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRun {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: Option<DataSource>,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    /// Layer geometry preset; the desk layout when absent. Named reference
    /// presets use the full-width channel plan.
    pub preset: Option<String>,
    #[serde(default)]
    pub gan: GanOverrides,
}

fn default_model() -> ModelKind {
    ModelKind::Dcwgan
}

fn default_fraction() -> f64 {
    0.8
}

impl TrainRun {
    pub fn gan_config(&self, seed: u64) -> Result<GanConfig> {
        let kind = self
            .model
            .loss_kind()
            .ok_or_else(|| Error::Config("model: copula has no GAN configuration".into()))?;
        let mut cfg = match &self.preset {
            None => GanConfig::desk(kind),
            Some(name) => {
                let p: Preset = name.parse().map_err(|e: Error| Error::Config(format!("preset: {e}")))?;
                let mut c = GanConfig::preset(p, kind);
                if p == Preset::DeskWind {
                    c = GanConfig::desk(kind);
                } else {
                    c.channel_plan = REFERENCE_CHANNELS.to_vec();
                }
                c
            }
        };
        let o = &self.gan;
        if let Some(v) = &o.layers {
            cfg.layers = v.clone();
        }
        if let Some(v) = &o.channel_plan {
            cfg.channel_plan = v.clone();
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = o.$f { cfg.$f = v; })* };
        }
        set!(epochs, learning_rate, batch_size, critic_iters, clip_c);
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRun {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// A GAN checkpoint or copula model file.
    pub model: Option<PathBuf>,
    pub n: Option<usize>,
    /// Value of the `source` column; defaults to the model kind.
    pub source: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedInput {
    pub name: String,
    /// A generated archive directory or a samples CSV.
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRun {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Held-out archive directory.
    pub real: Option<PathBuf>,
    #[serde(default)]
    pub generated: Vec<GeneratedInput>,
    /// Adds an i.i.d. uniform-noise model named `uniform`.
    #[serde(default = "yes")]
    pub uniform_baseline: bool,
}

fn yes() -> bool {
    true
}

impl Default for EvaluateRun {
    fn default() -> Self {
        EvaluateRun {
            seed: None,
            out: None,
            real: None,
            generated: Vec::new(),
            uniform_baseline: true,
        }
    }
}
