use serde::{Deserialize, Serialize};

use super::Param;
use crate::error::{Error, Result};

/// Updates parameters in place from their accumulated gradients.
///
/// Parameters without a gradient are skipped entirely, including their
/// moment accumulators.
pub trait Optimizer {
    fn step(&mut self, params: &mut [Param]) -> Result<()>;

    /// Number of completed steps.
    fn steps(&self) -> u64;
}

fn check_shapes(shapes: &[Vec<usize>], params: &[Param]) -> Result<()> {
    if shapes.len() != params.len() {
        return Err(Error::config(format!(
            "optimizer tracks {} parameters, got {}",
            shapes.len(),
            params.len()
        )));
    }
    for (i, (s, p)) in shapes.iter().zip(params).enumerate() {
        if s.as_slice() != p.value.shape() {
            return Err(Error::config(format!(
                "optimizer state {i} has shape {s:?}, parameter has {:?}",
                p.value.shape()
            )));
        }
        if let Some(g) = &p.grad {
            if g.shape() != p.value.shape() {
                return Err(Error::config(format!(
                    "gradient {i} has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.value.shape()
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 2e-5,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    shapes: Vec<Vec<usize>>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Param]) -> Self {
        Adam {
            config,
            step: 0,
            shapes: params.iter().map(|p| p.value.shape().to_vec()).collect(),
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [Param]) -> Result<()> {
        check_shapes(&self.shapes, params)?;
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(grad) = &p.grad else { continue };
            if !p.requires_grad {
                continue;
            }
            for (((x, g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *x -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }

    fn steps(&self) -> u64 {
        self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 2e-5,
            decay: 0.9,
            eps: 1e-8,
        }
    }
}

/// RMSProp: `s ← ρ·s + (1-ρ)·g²`, `x ← x - α·g / √(s + ε)`.
#[derive(Debug, Clone)]
pub struct RmsProp {
    config: RmsPropConfig,
    step: u64,
    shapes: Vec<Vec<usize>>,
    sq: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, params: &[Param]) -> Self {
        RmsProp {
            config,
            step: 0,
            shapes: params.iter().map(|p| p.value.shape().to_vec()).collect(),
            sq: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }
}

impl Optimizer for RmsProp {
    fn step(&mut self, params: &mut [Param]) -> Result<()> {
        check_shapes(&self.shapes, params)?;
        self.step += 1;
        let RmsPropConfig {
            learning_rate,
            decay,
            eps,
        } = self.config;
        for (p, sq) in params.iter_mut().zip(&mut self.sq) {
            let Some(grad) = &p.grad else { continue };
            if !p.requires_grad {
                continue;
            }
            for ((x, g), s) in p.value.data_mut().iter_mut().zip(grad.data()).zip(sq.iter_mut()) {
                *s = decay * *s + (1.0 - decay) * g * g;
                *x -= learning_rate * g / (*s + eps).sqrt();
            }
        }
        Ok(())
    }

    fn steps(&self) -> u64 {
        self.step
    }
}

/// Clamps every parameter value into `[-c, c]`.
pub fn clip_weights(params: &mut [Param], c: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(Error::config(format!("clip constant must be positive, got {c}")));
    }
    for p in params {
        p.value.data_mut().iter_mut().for_each(|v| *v = v.clamp(-c, c));
    }
    Ok(())
}
