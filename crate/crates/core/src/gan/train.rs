use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{GanConfig, LossKind};
use super::network::{latent, Network};
use crate::data::{FarmMeta, ScenarioDataset};
use crate::error::{Error, Result};
use crate::tensor::{clip_weights, Adam, AdamConfig, Graph, NormMode, Optimizer, RmsProp, RmsPropConfig, Tensor};

/// Mean losses of one epoch. `g_loss` is `None` until the generator has
/// taken its first step (possible in early critic-only epochs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub d_loss: f64,
    pub g_loss: Option<f64>,
}

/// A generator/discriminator pair together with its training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: GanConfig,
    pub farms: Vec<FarmMeta>,
    pub horizon: usize,
    pub generator: Network,
    pub discriminator: Network,
    pub history: Vec<EpochLoss>,
    /// Set once every configured epoch has run.
    pub finished: bool,
}

enum Opt {
    Adam(Adam),
    Rms(RmsProp),
}

impl Opt {
    fn new(config: &GanConfig, net: &Network) -> Self {
        if config.loss_kind == LossKind::Wasserstein {
            Opt::Rms(RmsProp::new(
                RmsPropConfig {
                    learning_rate: config.learning_rate,
                    ..Default::default()
                },
                &net.params,
            ))
        } else {
            Opt::Adam(Adam::new(
                AdamConfig {
                    learning_rate: config.learning_rate,
                    ..Default::default()
                },
                &net.params,
            ))
        }
    }

    fn step(&mut self, net: &mut Network) -> Result<()> {
        match self {
            Opt::Adam(o) => o.step(&mut net.params),
            Opt::Rms(o) => o.step(&mut net.params),
        }
    }
}

fn batch_tensor(ds: &ScenarioDataset, idx: &[usize]) -> Tensor {
    let dims = ds.dims();
    let mut data = Vec::with_capacity(idx.len() * dims);
    for &i in idx {
        data.extend_from_slice(&ds.samples()[i]);
    }
    Tensor::new(vec![idx.len(), 1, ds.parks(), ds.horizon()], data).expect("batch shape")
}

fn finite(v: f64, epoch: usize, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical {
            epoch,
            message: format!("{what} loss is {v}"),
        })
    }
}

/// Mutable state of one training run.
pub(crate) struct Trainer {
    pub(crate) config: GanConfig,
    pub(crate) gen: Network,
    pub(crate) disc: Network,
    g_opt: Opt,
    d_opt: Opt,
    pub(crate) rng: crate::rng::Rng,
}

impl Trainer {
    pub(crate) fn new(config: &GanConfig, parks: usize, horizon: usize) -> Result<Self> {
        let gen = Network::generator(config, parks, horizon)?;
        let disc = Network::discriminator(config, parks, horizon)?;
        Ok(Trainer {
            g_opt: Opt::new(config, &gen),
            d_opt: Opt::new(config, &disc),
            config: config.clone(),
            gen,
            disc,
            rng: crate::rng::derived(config.seed, 0x7a41),
        })
    }

    fn fake_batch(&mut self, n: usize) -> Result<Tensor> {
        let z = latent(&mut self.rng, n, self.config.latent_dim());
        self.gen.infer(z, NormMode::Train)
    }

    /// One discriminator/critic update on a real batch; returns its loss
    /// before the update.
    pub(crate) fn discriminator_step(&mut self, real: Tensor) -> Result<f64> {
        let n = real.shape()[0];
        let fake = self.fake_batch(n)?;
        self.discriminator_step_with(real, fake)
    }

    pub(crate) fn discriminator_step_with(&mut self, real: Tensor, fake: Tensor) -> Result<f64> {
        let n = real.shape()[0];
        let mut g = Graph::new();
        let xr = g.constant(real);
        let xf = g.constant(fake);
        let on_real = self.disc.forward(&mut g, xr, NormMode::Train, true)?;
        let on_fake = self.disc.forward(&mut g, xf, NormMode::Train, true)?;
        let loss = match self.config.loss_kind {
            LossKind::Bce => {
                let a = g.bce(on_real.output, &vec![1.0; n])?;
                let b = g.bce(on_fake.output, &vec![0.0; n])?;
                g.add(a, b)?
            }
            LossKind::Wasserstein => {
                let a = g.mean(on_fake.output);
                let b = g.mean(on_real.output);
                g.sub(a, b)?
            }
        };
        let value = g.value(loss).item()?;
        let grads = g.backward(loss)?;
        // Both passes share the parameters; sum their contributions.
        self.disc.collect_grads(&grads, &on_real.params)?;
        for (p, v) in self.disc.params.iter_mut().zip(&on_fake.params) {
            if let Some(gr) = grads.get(*v) {
                p.accumulate(gr)?;
            }
        }
        self.d_opt.step(&mut self.disc)?;
        if self.config.loss_kind == LossKind::Wasserstein {
            clip_weights(&mut self.disc.params, self.config.clip_c)?;
        }
        Ok(value)
    }

    /// One generator update on a fresh latent batch; returns its loss
    /// before the update.
    pub(crate) fn generator_step(&mut self, n: usize) -> Result<f64> {
        let z = latent(&mut self.rng, n, self.config.latent_dim());
        let mut g = Graph::new();
        let x = g.constant(z);
        let fake = self.gen.forward(&mut g, x, NormMode::Train, true)?;
        let score = self.disc.forward(&mut g, fake.output, NormMode::Train, false)?;
        let loss = match self.config.loss_kind {
            LossKind::Bce => g.bce(score.output, &vec![1.0; n])?,
            LossKind::Wasserstein => {
                let m = g.mean(score.output);
                g.scale(m, -1.0)
            }
        };
        let value = g.value(loss).item()?;
        let grads = g.backward(loss)?;
        self.gen.collect_grads(&grads, &fake.params)?;
        self.g_opt.step(&mut self.gen)?;
        Ok(value)
    }
}

/// Trains a generator/discriminator pair on `dataset`.
///
/// Each epoch visits every day once in shuffled minibatches; a trailing
/// batch of a single day is skipped because batch normalization needs two.
/// In BCE mode every batch makes one discriminator and one generator step.
/// In wasserstein mode every batch makes one critic step and every
/// `critic_iters`-th critic step (counted across epochs) is followed by a
/// generator step. A non-finite loss aborts with the 1-based epoch number.
pub fn train(dataset: &ScenarioDataset, config: &GanConfig) -> Result<TrainedModel> {
    train_with(dataset, config, |_, _| {})
}

/// [`train`] with a callback receiving the 1-based epoch number and its
/// losses after every epoch.
pub fn train_with(
    dataset: &ScenarioDataset,
    config: &GanConfig,
    mut on_epoch: impl FnMut(usize, &EpochLoss),
) -> Result<TrainedModel> {
    if dataset.is_empty() {
        return Err(Error::data("cannot train on an empty dataset"));
    }
    config.validate()?;
    if config.batch_size > dataset.len() {
        return Err(Error::config(format!(
            "gan.batch_size {} exceeds the {} training samples",
            config.batch_size,
            dataset.len()
        )));
    }
    let mut t = Trainer::new(config, dataset.parks(), dataset.horizon())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut critic_steps = 0usize;
    let mut last_g: Option<f64> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut t.rng);
        let (mut d_sum, mut d_n, mut g_sum, mut g_n) = (0.0, 0usize, 0.0, 0usize);
        for idx in order.chunks(config.batch_size) {
            if idx.len() < 2 {
                continue;
            }
            let real = batch_tensor(dataset, idx);
            d_sum += finite(t.discriminator_step(real)?, epoch, "discriminator")?;
            d_n += 1;
            let g_due = match config.loss_kind {
                LossKind::Bce => true,
                LossKind::Wasserstein => {
                    critic_steps += 1;
                    critic_steps % config.critic_iters == 0
                }
            };
            if g_due {
                g_sum += finite(t.generator_step(config.batch_size)?, epoch, "generator")?;
                g_n += 1;
            }
        }
        if g_n > 0 {
            last_g = Some(g_sum / g_n as f64);
        }
        let entry = EpochLoss {
            d_loss: d_sum / d_n as f64,
            g_loss: last_g,
        };
        if !t.gen.is_finite() || !t.disc.is_finite() {
            return Err(Error::Numerical {
                epoch,
                message: "parameters became non-finite".into(),
            });
        }
        if epoch % 100 == 0 || epoch == config.epochs {
            log::info!(
                "epoch {epoch}/{}: d_loss {:.5} g_loss {}",
                config.epochs,
                entry.d_loss,
                entry.g_loss.map_or("-".to_string(), |g| format!("{g:.5}"))
            );
        }
        on_epoch(epoch, &entry);
        history.push(entry);
    }
    for p in t.gen.params.iter_mut().chain(&mut t.disc.params) {
        p.zero_grad();
    }
    Ok(TrainedModel {
        config: config.clone(),
        farms: dataset.farms().to_vec(),
        horizon: dataset.horizon(),
        generator: t.gen,
        discriminator: t.disc,
        history,
        finished: true,
    })
}

const SAMPLE_CHUNK: usize = 256;

impl TrainedModel {
    /// Draws `n` scenarios with the generator in inference mode.
    pub fn sample(&self, n: usize, seed: u64) -> Result<ScenarioDataset> {
        if n == 0 {
            return Err(Error::usage("sample count must be positive"));
        }
        let mut gen = self.generator.clone();
        let mut rng = crate::rng::derived(seed, 0x5a3e);
        let parks = self.farms.len();
        let dims = parks * self.horizon;
        let mut samples = Vec::with_capacity(n);
        let mut left = n;
        while left > 0 {
            let k = left.min(SAMPLE_CHUNK);
            let z = latent(&mut rng, k, self.config.latent_dim());
            let out = gen.infer(z, NormMode::Eval)?;
            if out.shape() != [k, 1, parks, self.horizon] {
                return Err(Error::config(format!(
                    "generator produced {:?}, model is bound to {parks}×{}",
                    out.shape(),
                    self.horizon
                )));
            }
            samples.extend(out.data().chunks(dims).map(|c| c.to_vec()));
            left -= k;
        }
        ScenarioDataset::new(self.farms.clone(), self.horizon, samples)
    }

    pub fn parks(&self) -> usize {
        self.farms.len()
    }
}
