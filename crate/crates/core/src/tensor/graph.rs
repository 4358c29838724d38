use serde::{Deserialize, Serialize};

use super::conv::{self, ConvSpec};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize with batch statistics and update the running averages.
    Train,
    /// Normalize with the running averages.
    Eval,
}

/// Running statistics of a batch-normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

enum Op {
    Leaf,
    Conv {
        input: Var,
        weight: Var,
        bias: Var,
        spec: ConvSpec,
        transposed: bool,
        in_hw: (usize, usize),
        out_hw: (usize, usize),
        saved: Vec<f64>,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    Sigmoid {
        input: Var,
    },
    Bce {
        input: Var,
        labels: Vec<f64>,
    },
    Sum {
        input: Var,
    },
    Mean {
        input: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale {
        input: Var,
        factor: f64,
    },
    Reshape {
        input: Var,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `var` does not influence the loss or does not require a
    /// gradient.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

/// An append-only record of operations. Nodes may only refer to earlier
/// nodes, so insertion order is a topological order.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

pub const BCE_EPS: f64 = 1e-7;

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(batch, channels, spatial)` of a `[N, C]` or `[N, C, H, W]` tensor.
fn nc_layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [n, c] => Ok((n, c, 1)),
        [n, c, h, w] => Ok((n, c, h * w)),
        _ => Err(Error::config(format!(
            "batch norm expects [N, C] or [N, C, H, W], got {shape:?}"
        ))),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn conv_common(&mut self, input: Var, weight: Var, bias: Var, spec: &ConvSpec, transposed: bool) -> Result<Var> {
        spec.validate()?;
        let x = self.value(input);
        let (n, c, h, w) = match *x.shape() {
            [n, c, h, w] => (n, c, h, w),
            ref s => return Err(Error::config(format!("conv input must be [N, C, H, W], got {s:?}"))),
        };
        if c != spec.in_channels {
            return Err(Error::config(format!(
                "conv input channel dimension is {c}, layer expects {}",
                spec.in_channels
            )));
        }
        let want_w = if transposed {
            spec.transposed_weight_shape()
        } else {
            spec.conv_weight_shape()
        };
        if self.value(weight).shape() != want_w {
            return Err(Error::config(format!(
                "conv weight shape is {:?}, layer expects {want_w:?}",
                self.value(weight).shape()
            )));
        }
        if self.value(bias).shape() != [spec.out_channels] {
            return Err(Error::config(format!(
                "conv bias shape is {:?}, layer expects [{}]",
                self.value(bias).shape(),
                spec.out_channels
            )));
        }
        let xd = x.data();
        let wd = self.value(weight).data();
        let bd = self.value(bias).data();
        let fwd = if transposed {
            conv::conv_transpose2d_forward(xd, n, (h, w), wd, bd, spec)?
        } else {
            conv::conv2d_forward(xd, n, (h, w), wd, bd, spec)?
        };
        let out_shape = vec![n, spec.out_channels, fwd.out_hw.0, fwd.out_hw.1];
        let value = Tensor::new(out_shape, fwd.output)?;
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        let saved = if self.needs(weight) { fwd.saved } else { Vec::new() };
        Ok(self.push(
            value,
            Op::Conv {
                input,
                weight,
                bias,
                spec: *spec,
                transposed,
                in_hw: (h, w),
                out_hw: fwd.out_hw,
                saved,
            },
            needs,
        ))
    }

    /// 2-D cross-correlation. Weight `[out, in, kh, kw]`, bias `[out]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, spec: &ConvSpec) -> Result<Var> {
        self.conv_common(input, weight, bias, spec, false)
    }

    /// Transposed 2-D convolution. Weight `[in, out, kh, kw]`, bias `[out]`.
    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, bias: Var, spec: &ConvSpec) -> Result<Var> {
        self.conv_common(input, weight, bias, spec, true)
    }

    /// Per-channel batch normalization over `N` (and `H × W` when present).
    ///
    /// Training mode normalizes by the biased batch variance and folds the
    /// unbiased one into the running average, which needs at least two
    /// samples.
    pub fn batch_norm2d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode,
        state: &mut BatchNormState,
    ) -> Result<Var> {
        let x = self.value(input);
        let (n, c, hw) = nc_layout(x.shape())?;
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).shape() != [c] {
                return Err(Error::config(format!(
                    "batch norm {name} shape {:?} does not match {c} channels",
                    self.value(v).shape()
                )));
            }
        }
        if state.channels() != c {
            return Err(Error::config(format!(
                "batch norm running stats have {} channels, input has {c}",
                state.channels()
            )));
        }
        let xd = x.data();
        let count = n * hw;
        let (mean, var) = match mode {
            NormMode::Train => {
                if n < 2 {
                    return Err(Error::usage(format!(
                        "batch norm in training mode needs a batch of at least 2, got {n}"
                    )));
                }
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let vals = (0..n).flat_map(|s| xd[(s * c + ch) * hw..][..hw].iter());
                    let m = vals.clone().sum::<f64>() / count as f64;
                    let v = vals.map(|x| (x - m) * (x - m)).sum::<f64>() / count as f64;
                    mean[ch] = m;
                    var[ch] = v;
                }
                let unbiased = count as f64 / (count as f64 - 1.0);
                for ch in 0..c {
                    state.running_mean[ch] = (1.0 - state.momentum) * state.running_mean[ch] + state.momentum * mean[ch];
                    state.running_var[ch] =
                        (1.0 - state.momentum) * state.running_var[ch] + state.momentum * var[ch] * unbiased;
                }
                (mean, var)
            }
            NormMode::Eval => (state.running_mean.clone(), state.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * hw;
                for i in off..off + hw {
                    xhat[i] = (xd[i] - mean[ch]) * inv_std[ch];
                    out[i] = g[ch] * xhat[i] + b[ch];
                }
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let needs = self.needs(input) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                train: mode == NormMode::Train,
            },
            needs,
        ))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let x = self.value(input);
        let value = Tensor::from_fn(x.shape(), |i| {
            let v = x.data()[i];
            if v >= 0.0 {
                v
            } else {
                slope * v
            }
        });
        let needs = self.needs(input);
        self.push(value, Op::LeakyRelu { input, slope }, needs)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let value = Tensor::from_fn(x.shape(), |i| sigmoid_scalar(x.data()[i]));
        let needs = self.needs(input);
        self.push(value, Op::Sigmoid { input }, needs)
    }

    /// Mean binary cross-entropy of probabilities against `{0, 1}` labels.
    /// Probabilities are clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce(&mut self, probs: Var, labels: &[f64]) -> Result<Var> {
        let p = self.value(probs);
        if p.len() != labels.len() {
            return Err(Error::config(format!(
                "bce: {} probabilities but {} labels",
                p.len(),
                labels.len()
            )));
        }
        let loss = p
            .data()
            .iter()
            .zip(labels)
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / labels.len() as f64;
        let needs = self.needs(probs);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                input: probs,
                labels: labels.to_vec(),
            },
            needs,
        ))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().sum();
        let needs = self.needs(input);
        self.push(Tensor::scalar(s), Op::Sum { input }, needs)
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let m = x.data().iter().sum::<f64>() / x.len() as f64;
        let needs = self.needs(input);
        self.push(Tensor::scalar(m), Op::Mean { input }, needs)
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::config(format!(
                "{name}: shapes {:?} and {:?} differ",
                x.shape(),
                y.shape()
            )));
        }
        Ok(Tensor::from_fn(x.shape(), |i| f(x.data()[i], y.data()[i])))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "add", |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "sub", |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), needs))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "mul", |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let x = self.value(input);
        let value = Tensor::from_fn(x.shape(), |i| x.data()[i] * factor);
        let needs = self.needs(input);
        self.push(value, Op::Scale { input, factor }, needs)
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).reshaped(shape)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::Reshape { input }, needs))
    }

    /// Reverse-mode sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if root.needs_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| g.map(|g| Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape")))
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], target: Var, delta: Vec<f64>) {
        if !self.needs(target) {
            return;
        }
        match &mut grads[target.0] {
            Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, node: &Node, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                input,
                weight,
                bias,
                spec,
                transposed,
                in_hw,
                out_hw,
                saved,
            } => {
                let batch = self.value(*input).shape()[0];
                let need = (self.needs(*input), self.needs(*weight), self.needs(*bias));
                let w = self.value(*weight).data();
                let g = if *transposed {
                    conv::conv_transpose2d_backward(dy, batch, *in_hw, *out_hw, w, saved, spec, need)
                } else {
                    conv::conv2d_backward(dy, batch, *in_hw, *out_hw, w, saved, spec, need)
                };
                if let Some(d) = g.input {
                    self.accumulate(grads, *input, d);
                }
                if let Some(d) = g.weight {
                    self.accumulate(grads, *weight, d);
                }
                if let Some(d) = g.bias {
                    self.accumulate(grads, *bias, d);
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let (n, c, hw) = nc_layout(node.value.shape()).expect("validated in forward");
                let g = self.value(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for s in 0..n {
                    for ch in 0..c {
                        let off = (s * c + ch) * hw;
                        for i in off..off + hw {
                            dbeta[ch] += dy[i];
                            dgamma[ch] += dy[i] * xhat[i];
                        }
                    }
                }
                if self.needs(*input) {
                    let count = (n * hw) as f64;
                    let mut dx = vec![0.0; dy.len()];
                    for s in 0..n {
                        for ch in 0..c {
                            let off = (s * c + ch) * hw;
                            let k = g[ch] * inv_std[ch];
                            for i in off..off + hw {
                                dx[i] = if *train {
                                    k / count * (count * dy[i] - dbeta[ch] - xhat[i] * dgamma[ch])
                                } else {
                                    k * dy[i]
                                };
                            }
                        }
                    }
                    self.accumulate(grads, *input, dx);
                }
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input).data();
                let dx = x
                    .iter()
                    .zip(dy)
                    .map(|(&x, &d)| if x >= 0.0 { d } else { slope * d })
                    .collect();
                self.accumulate(grads, *input, dx);
            }
            Op::Sigmoid { input } => {
                let dx = node
                    .value
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&s, &d)| d * s * (1.0 - s))
                    .collect();
                self.accumulate(grads, *input, dx);
            }
            Op::Bce { input, labels } => {
                let n = labels.len() as f64;
                let dx = self
                    .value(*input)
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&p, &y)| {
                        if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                            0.0
                        } else {
                            dy[0] * (-y / p + (1.0 - y) / (1.0 - p)) / n
                        }
                    })
                    .collect();
                self.accumulate(grads, *input, dx);
            }
            Op::Sum { input } => {
                let len = self.value(*input).len();
                self.accumulate(grads, *input, vec![dy[0]; len]);
            }
            Op::Mean { input } => {
                let len = self.value(*input).len();
                self.accumulate(grads, *input, vec![dy[0] / len as f64; len]);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, dy.to_vec());
                self.accumulate(grads, *b, dy.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, dy.to_vec());
                self.accumulate(grads, *b, dy.iter().map(|d| -d).collect());
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    self.accumulate(grads, *a, dy.iter().zip(y).map(|(d, y)| d * y).collect());
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, dy.iter().zip(x).map(|(d, x)| d * x).collect());
                }
            }
            Op::Scale { input, factor } => {
                self.accumulate(grads, *input, dy.iter().map(|d| d * factor).collect());
            }
            Op::Reshape { input } => {
                self.accumulate(grads, *input, dy.to_vec());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.variable(t(&[3], &[0.3, -1.0, 2.0]));
        let loss = g.sum(x);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient_is_twice_x() {
        let mut g = Graph::new();
        let x = g.variable(t(&[2], &[1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_on_non_scalar_is_usage_error() {
        let mut g = Graph::new();
        let x = g.variable(t(&[2], &[1.0, 2.0]));
        let y = g.scale(x, 2.0);
        assert!(matches!(g.backward(y), Err(Error::Usage(_))));
    }

    #[test]
    fn unreachable_and_constant_nodes_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.variable(t(&[2], &[1.0, 2.0]));
        let unused = g.variable(t(&[2], &[5.0, 6.0]));
        let c = g.constant(t(&[2], &[3.0, 4.0]));
        let prod = g.mul(x, c).unwrap();
        let loss = g.sum(prod);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 4.0]);
        assert!(grads.get(unused).is_none());
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn leaky_relu_values_and_gradient() {
        let mut g = Graph::new();
        let x = g.variable(t(&[4], &[-1.0, 0.0, 2.0, -3.0]));
        let y = g.leaky_relu(x, 0.2);
        assert_eq!(g.value(y).data(), &[-0.2, 0.0, 2.0, -0.6000000000000001]);
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.2, 1.0, 1.0, 0.2]);
    }

    #[test]
    fn leaky_relu_is_identity_on_non_negative_input() {
        let mut g = Graph::new();
        let data = [0.0, 0.5, 3.0, 1e6];
        let x = g.constant(t(&[4], &data));
        let y = g.leaky_relu(x, 0.2);
        assert_eq!(g.value(y).data(), &data);
    }

    #[test]
    fn sigmoid_values_are_stable() {
        let mut g = Graph::new();
        let x = g.constant(t(&[4], &[0.0, -1000.0, 1000.0, 3f64.ln()]));
        let y = g.sigmoid(x);
        let v = g.value(y).data();
        assert_eq!(v[0], 0.5);
        assert!(v[1].is_finite() && (0.0..=1e-300).contains(&v[1]));
        assert_eq!(v[2], 1.0);
        assert!((v[3] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn bce_closed_forms() {
        let mut g = Graph::new();
        let half = g.constant(t(&[2], &[0.5, 0.5]));
        let l = g.bce(half, &[0.0, 1.0]).unwrap();
        assert!((g.value(l).item().unwrap() - 2f64.ln()).abs() < 1e-15);

        let p = g.constant(t(&[1], &[0.9]));
        let l = g.bce(p, &[0.0]).unwrap();
        assert!((g.value(l).item().unwrap() + 0.1f64.ln()).abs() < 1e-12);

        let exact = g.constant(t(&[2], &[1.0, 0.0]));
        let l = g.bce(exact, &[1.0, 0.0]).unwrap();
        let v = g.value(l).item().unwrap();
        assert!(v >= 0.0 && v <= -(1.0 - BCE_EPS).ln() + 1e-15);
    }

    fn bn_input() -> Tensor {
        // Deterministic but irregular values.
        Tensor::from_fn(&[8, 4, 6, 6], |i| ((i * 7919 % 1013) as f64 / 101.3).sin() * 3.0 + (i % 4) as f64)
    }

    fn channel_moments(x: &Tensor) -> Vec<(f64, f64)> {
        let (n, c, hw) = nc_layout(x.shape()).unwrap();
        (0..c)
            .map(|ch| {
                let vals: Vec<f64> = (0..n)
                    .flat_map(|s| x.data()[(s * c + ch) * hw..][..hw].to_vec())
                    .collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
                (m, v)
            })
            .collect()
    }

    #[test]
    fn batch_norm_standardizes_each_channel() {
        let mut g = Graph::new();
        let x = g.constant(bn_input());
        let gamma = g.constant(Tensor::full(&[4], 1.0));
        let beta = g.constant(Tensor::zeros(&[4]));
        let mut state = BatchNormState::new(4);
        let y = g.batch_norm2d(x, gamma, beta, NormMode::Train, &mut state).unwrap();
        for (m, v) in channel_moments(g.value(y)) {
            assert!(m.abs() < 1e-5);
            assert!((v - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn batch_norm_affine_parameters_set_mean_and_std() {
        let mut g = Graph::new();
        let x = g.constant(bn_input());
        let gamma = g.constant(Tensor::full(&[4], 2.0));
        let beta = g.constant(Tensor::full(&[4], 0.5));
        let mut state = BatchNormState::new(4);
        let y = g.batch_norm2d(x, gamma, beta, NormMode::Train, &mut state).unwrap();
        for (m, v) in channel_moments(g.value(y)) {
            assert!((m - 0.5).abs() < 1e-4);
            assert!((v.sqrt() - 2.0).abs() < 1e-4);
        }
        // Running stats moved towards the batch statistics.
        assert!(state.running_mean.iter().any(|m| *m != 0.0));
    }

    #[test]
    fn batch_norm_constant_channel_maps_to_zero() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[3, 2, 2, 2], 4.2));
        let gamma = g.constant(Tensor::full(&[2], 1.0));
        let beta = g.constant(Tensor::zeros(&[2]));
        let mut state = BatchNormState::new(2);
        let y = g.batch_norm2d(x, gamma, beta, NormMode::Train, &mut state).unwrap();
        // The batch mean of a constant is exact only up to rounding.
        assert!(g.value(y).data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn batch_norm_rejects_single_sample_training_batch() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[1, 2, 3, 3], 1.0));
        let gamma = g.constant(Tensor::full(&[2], 1.0));
        let beta = g.constant(Tensor::zeros(&[2]));
        let mut state = BatchNormState::new(2);
        assert!(g.batch_norm2d(x, gamma, beta, NormMode::Train, &mut state).is_err());
        assert!(g.batch_norm2d(x, gamma, beta, NormMode::Eval, &mut state).is_ok());
    }

    #[test]
    fn conv_channel_mismatch_is_config_error() {
        let mut g = Graph::new();
        let spec = ConvSpec::new(2, 1, (1, 1), (1, 1), (0, 0));
        let x = g.constant(Tensor::zeros(&[1, 3, 2, 2]));
        let w = g.constant(Tensor::zeros(&spec.conv_weight_shape()));
        let b = g.constant(Tensor::zeros(&[1]));
        let err = g.conv2d(x, w, b, &spec).unwrap_err();
        assert!(err.to_string().contains("channel"));
    }
}
