use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{GanConfig, LossKind};
use crate::error::{Error, Result};
use crate::tensor::{BatchNormState, ConvSpec, Graph, NormMode, Param, Tensor, Var};

pub(crate) const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Sigmoid,
    Linear,
}

/// One convolution plus its optional batch normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: ConvSpec,
    /// Index of the weight in [`Network::params`]; bias follows, then
    /// gamma and beta when `norm` is set.
    pub param_offset: usize,
    pub norm: Option<BatchNormState>,
}

/// A stack of (transposed) convolutions with batch normalization and
/// leaky-ReLU between layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub role: Role,
    pub head: Head,
    pub layers: Vec<Layer>,
    pub params: Vec<Param>,
}

/// Output of [`Network::forward`]: the head activation and the graph
/// handles of every parameter, aligned with [`Network::params`].
pub struct Forward {
    pub output: Var,
    pub params: Vec<Var>,
}

impl Network {
    fn build(role: Role, head: Head, specs: Vec<ConvSpec>, rng: &mut crate::rng::Rng) -> Result<Self> {
        let n = specs.len();
        let weight_init = Normal::new(0.0, 0.02).expect("valid normal");
        let mut layers = Vec::with_capacity(n);
        let mut params = Vec::new();
        for (i, spec) in specs.into_iter().enumerate() {
            spec.validate()?;
            let wshape = match role {
                Role::Generator => spec.transposed_weight_shape(),
                Role::Discriminator => spec.conv_weight_shape(),
            };
            let normed = match role {
                Role::Generator => i + 1 < n,
                Role::Discriminator => i > 0 && i + 1 < n,
            };
            let offset = params.len();
            params.push(Param::new(Tensor::from_fn(&wshape, |_| weight_init.sample(rng))));
            params.push(Param::new(Tensor::zeros(&[spec.out_channels])));
            let norm = if normed {
                let c = spec.out_channels;
                params.push(Param::new(Tensor::from_fn(&[c], |_| 1.0 + 0.02 * rng.sample::<f64, _>(rand_distr::StandardNormal))));
                params.push(Param::new(Tensor::zeros(&[c])));
                Some(BatchNormState::new(c))
            } else {
                None
            };
            layers.push(Layer {
                spec,
                param_offset: offset,
                norm,
            });
        }
        Ok(Network {
            role,
            head,
            layers,
            params,
        })
    }

    /// Latent `[N, latent, 1, 1]` → `(convT → BN → leaky)* → convT → sigmoid`
    /// → `[N, 1, P, H]`.
    pub fn generator(config: &GanConfig, parks: usize, horizon: usize) -> Result<Self> {
        config.check_shape(parks, horizon)?;
        let mut rng = crate::rng::derived(config.seed, 0x6e01);
        Network::build(Role::Generator, Head::Sigmoid, config.generator_specs(), &mut rng)
    }

    /// `[N, 1, P, H]` → `conv → leaky → (conv → BN → leaky)* → conv` → `[N]`,
    /// with a sigmoid head for BCE and a linear one for the critic.
    pub fn discriminator(config: &GanConfig, parks: usize, horizon: usize) -> Result<Self> {
        config.check_shape(parks, horizon)?;
        let mut rng = crate::rng::derived(config.seed, 0x6e02);
        let head = match config.loss_kind {
            LossKind::Bce => Head::Sigmoid,
            LossKind::Wasserstein => Head::Linear,
        };
        Network::build(Role::Discriminator, head, config.discriminator_specs(), &mut rng)
    }

    /// Records the network on `graph`. Parameters become variables when
    /// `trainable`, constants otherwise. Training mode updates the running
    /// normalization statistics.
    pub fn forward(&mut self, graph: &mut Graph, input: Var, mode: NormMode, trainable: bool) -> Result<Forward> {
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| graph.leaf(p.value.clone(), trainable && p.requires_grad))
            .collect();
        let n = self.layers.len();
        let mut x = input;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let (w, b) = (params[layer.param_offset], params[layer.param_offset + 1]);
            x = match self.role {
                Role::Generator => graph.conv_transpose2d(x, w, b, &layer.spec)?,
                Role::Discriminator => graph.conv2d(x, w, b, &layer.spec)?,
            };
            if let Some(state) = &mut layer.norm {
                let (g, be) = (params[layer.param_offset + 2], params[layer.param_offset + 3]);
                x = graph.batch_norm2d(x, g, be, mode, state)?;
            }
            if i + 1 < n {
                x = graph.leaky_relu(x, LEAKY_SLOPE);
            }
        }
        if self.head == Head::Sigmoid {
            x = graph.sigmoid(x);
        }
        if self.role == Role::Discriminator {
            let batch = graph.value(x).shape()[0];
            if graph.value(x).len() != batch {
                return Err(Error::config(format!(
                    "discriminator output {:?} is not one value per sample",
                    graph.value(x).shape()
                )));
            }
            x = graph.reshape(x, &[batch])?;
        }
        Ok(Forward { output: x, params })
    }

    /// Copies gradients from a finished backward pass into the parameters.
    pub fn collect_grads(&mut self, grads: &crate::tensor::Gradients, vars: &[Var]) -> Result<()> {
        for (p, v) in self.params.iter_mut().zip(vars) {
            p.zero_grad();
            if let Some(g) = grads.get(*v) {
                p.accumulate(g)?;
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
            && self
                .layers
                .iter()
                .filter_map(|l| l.norm.as_ref())
                .all(|s| s.running_mean.iter().chain(&s.running_var).all(|v| v.is_finite()))
    }

    pub fn max_abs_param(&self) -> f64 {
        self.params.iter().map(|p| p.value.max_abs()).fold(0.0, f64::max)
    }

    /// Forward pass outside any training step.
    pub fn infer(&mut self, input: Tensor, mode: NormMode) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(input);
        let out = self.forward(&mut g, x, mode, false)?.output;
        Ok(g.value(out).clone())
    }
}

/// `n` standard-normal latent vectors shaped `[n, dim, 1, 1]`.
pub(crate) fn latent(rng: &mut crate::rng::Rng, n: usize, dim: usize) -> Tensor {
    Tensor::from_fn(&[n, dim, 1, 1], |_| rng.sample(rand_distr::StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::config::Preset;

    #[test]
    fn generator_maps_latent_to_every_preset_target() {
        for p in Preset::ALL {
            let (ph, hh) = p.target();
            let cfg = GanConfig::preset(p, LossKind::Bce);
            let mut g = Network::generator(&cfg, ph, hh).unwrap();
            let z = latent(&mut crate::rng::seeded(1), 2, 100);
            let out = g.infer(z, NormMode::Train).unwrap();
            assert_eq!(out.shape(), &[2, 1, ph, hh], "{p:?}");
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));

            let mut d = Network::discriminator(&cfg, ph, hh).unwrap();
            let score = d.infer(out, NormMode::Train).unwrap();
            assert_eq!(score.shape(), &[2]);
            assert!(score.data().iter().all(|v| *v > 0.0 && *v < 1.0));
        }
    }

    #[test]
    fn critic_head_is_linear() {
        let cfg = GanConfig::desk(LossKind::Wasserstein);
        let mut d = Network::discriminator(&cfg, 8, 24).unwrap();
        assert_eq!(d.head, Head::Linear);
        let x = Tensor::from_fn(&[3, 1, 8, 24], |i| (i % 7) as f64 * 40.0 - 100.0);
        let s = d.infer(x, NormMode::Train).unwrap();
        assert_eq!(s.shape(), &[3]);
    }

    #[test]
    fn normalization_sits_only_between_hidden_layers() {
        let cfg = GanConfig::desk(LossKind::Bce);
        let g = Network::generator(&cfg, 8, 24).unwrap();
        let d = Network::discriminator(&cfg, 8, 24).unwrap();
        let gn: Vec<bool> = g.layers.iter().map(|l| l.norm.is_some()).collect();
        let dn: Vec<bool> = d.layers.iter().map(|l| l.norm.is_some()).collect();
        assert_eq!(gn, vec![true, true, true, false]);
        assert_eq!(dn, vec![false, true, true, false]);
    }

    #[test]
    fn wrong_target_builds_nothing() {
        let cfg = GanConfig::desk(LossKind::Bce);
        assert!(Network::generator(&cfg, 8, 23).is_err());
        assert!(Network::discriminator(&cfg, 9, 24).is_err());
    }

    #[test]
    fn initialization_follows_seed() {
        let mut cfg = GanConfig::desk(LossKind::Bce);
        let a = Network::generator(&cfg, 8, 24).unwrap();
        let b = Network::generator(&cfg, 8, 24).unwrap();
        assert_eq!(a, b);
        cfg.seed = 9;
        assert_ne!(a, Network::generator(&cfg, 8, 24).unwrap());
    }
}
