//! A minimal reverse-mode automatic differentiation engine.
//!
//! Values live in [`Tensor`]s (row-major `f64` arrays). A [`Graph`] records
//! operations as they are applied and [`Graph::backward`] walks the record in
//! reverse to produce gradients. Trainable state is kept outside the graph in
//! [`Param`]s so a graph can be thrown away after each optimizer step.

mod conv;
mod gemm;
pub mod gradcheck;
mod graph;
mod optim;

pub use conv::ConvSpec;
pub use graph::{BatchNormState, Gradients, Graph, NormMode, Var};
pub use optim::{clip_weights, Adam, AdamConfig, Optimizer, RmsProp, RmsPropConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("tensor shape {shape:?} has a zero dimension")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::config(format!(
                "tensor shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let len: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::usage(format!("item() on tensor of shape {:?}", self.shape))),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Same data under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::config(format!(
                "dot of mismatched shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }
}

/// A trainable tensor with an optional accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Tensor,
    #[serde(skip)]
    pub grad: Option<Tensor>,
    #[serde(default = "default_true")]
    pub requires_grad: bool,
}

fn default_true() -> bool {
    true
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        Param {
            value,
            grad: None,
            requires_grad: true,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `grad` to the accumulated gradient.
    pub fn accumulate(&mut self, grad: &Tensor) -> Result<()> {
        if grad.shape() != self.value.shape() {
            return Err(Error::config(format!(
                "gradient shape {:?} does not match parameter shape {:?}",
                grad.shape(),
                self.value.shape()
            )));
        }
        match &mut self.grad {
            Some(acc) => acc
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .for_each(|(a, g)| *a += g),
            None => self.grad = Some(grad.clone()),
        }
        Ok(())
    }
}
