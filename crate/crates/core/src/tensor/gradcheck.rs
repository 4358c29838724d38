//! Central finite-difference checks of the analytic gradients.

use rand::Rng as _;

use super::{BatchNormState, ConvSpec, Graph, NormMode, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckedOp {
    Conv2d,
    ConvTranspose2d,
    BatchNormTrain,
    LeakyRelu,
    Sigmoid,
    Bce,
}

impl CheckedOp {
    pub const ALL: [CheckedOp; 6] = [
        CheckedOp::Conv2d,
        CheckedOp::ConvTranspose2d,
        CheckedOp::BatchNormTrain,
        CheckedOp::LeakyRelu,
        CheckedOp::Sigmoid,
        CheckedOp::Bce,
    ];
}

/// Worst agreement found over all cases of one operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub op: CheckedOp,
    pub cases: usize,
    pub max_rel_error: f64,
}

/// Difference below which a pair is compared absolutely rather than
/// relatively; keeps near-zero entries from dominating.
const REL_FLOOR: f64 = 1e-3;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Random tensor with entries in `[-1, 1)`, away from `±avoid`.
fn rand_tensor(rng: &mut crate::rng::Rng, shape: &[usize], avoid: f64) -> Tensor {
    Tensor::from_fn(shape, |_| loop {
        let v: f64 = rng.random_range(-1.0..1.0);
        if v.abs() >= avoid {
            break v;
        }
    })
}

/// A case is a list of inputs plus a builder producing a scalar loss.
struct Case {
    inputs: Vec<Tensor>,
    build: Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>,
}

impl Case {
    fn loss(&self, inputs: &[Tensor]) -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let l = (self.build)(&mut g, &vars)?;
        g.value(l).item()
    }

    fn max_error(&self, step: f64) -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = self.inputs.iter().map(|t| g.variable(t.clone())).collect();
        let l = (self.build)(&mut g, &vars)?;
        let grads = g.backward(l)?;
        let mut worst: f64 = 0.0;
        for (k, v) in vars.iter().enumerate() {
            let analytic = grads.get(*v).expect("every input feeds the loss").clone();
            for i in 0..self.inputs[k].len() {
                let mut plus = self.inputs.clone();
                plus[k].data_mut()[i] += step;
                let mut minus = self.inputs.clone();
                minus[k].data_mut()[i] -= step;
                let numeric = (self.loss(&plus)? - self.loss(&minus)?) / (2.0 * step);
                worst = worst.max(rel_err(analytic.data()[i], numeric));
            }
        }
        Ok(worst)
    }
}

/// Weighted sum `Σ wᵢ·yᵢ` so every output element carries a distinct
/// gradient.
fn weighted_sum(g: &mut Graph, y: Var, w: &Tensor) -> Result<Var> {
    let wv = g.constant(w.reshaped(g.value(y).shape())?);
    let p = g.mul(y, wv)?;
    Ok(g.sum(p))
}

fn make_case(op: CheckedOp, rng: &mut crate::rng::Rng) -> Case {
    match op {
        CheckedOp::Conv2d | CheckedOp::ConvTranspose2d => {
            let transposed = op == CheckedOp::ConvTranspose2d;
            let n = rng.random_range(1..=2);
            let cin = rng.random_range(1..=3);
            let cout = rng.random_range(1..=3);
            let kernel = (rng.random_range(1..=3), rng.random_range(1..=3));
            let stride = (rng.random_range(1..=2), rng.random_range(1..=2));
            let padding = (rng.random_range(0..kernel.0), rng.random_range(0..kernel.1));
            let spec = ConvSpec::new(cin, cout, kernel, stride, padding);
            let (h, w) = (rng.random_range(kernel.0..=5), rng.random_range(kernel.1..=5));
            let (oh, ow) = if transposed {
                spec.transposed_output(h, w).expect("positive output")
            } else {
                spec.conv_output(h, w).expect("kernel fits")
            };
            let wshape = if transposed {
                spec.transposed_weight_shape()
            } else {
                spec.conv_weight_shape()
            };
            let weights = rand_tensor(rng, &[n * cout * oh * ow], 0.0);
            Case {
                inputs: vec![
                    rand_tensor(rng, &[n, cin, h, w], 0.0),
                    rand_tensor(rng, &wshape, 0.0),
                    rand_tensor(rng, &[cout], 0.0),
                ],
                build: Box::new(move |g, v| {
                    let y = if transposed {
                        g.conv_transpose2d(v[0], v[1], v[2], &spec)?
                    } else {
                        g.conv2d(v[0], v[1], v[2], &spec)?
                    };
                    weighted_sum(g, y, &weights)
                }),
            }
        }
        CheckedOp::BatchNormTrain => {
            let n = rng.random_range(2..=4);
            let c = rng.random_range(1..=3);
            let (h, w) = (rng.random_range(1..=3), rng.random_range(1..=3));
            let weights = rand_tensor(rng, &[n * c * h * w], 0.0);
            Case {
                inputs: vec![
                    rand_tensor(rng, &[n, c, h, w], 0.0),
                    rand_tensor(rng, &[c], 0.0),
                    rand_tensor(rng, &[c], 0.0),
                ],
                build: Box::new(move |g, v| {
                    let mut state = BatchNormState::new(c);
                    let y = g.batch_norm2d(v[0], v[1], v[2], NormMode::Train, &mut state)?;
                    weighted_sum(g, y, &weights)
                }),
            }
        }
        CheckedOp::LeakyRelu | CheckedOp::Sigmoid => {
            let shape = [rng.random_range(1..=3), rng.random_range(1..=4), 2, 3];
            let len: usize = shape.iter().product();
            let weights = rand_tensor(rng, &[len], 0.0);
            // Keep away from the leaky-ReLU kink at zero.
            let x = rand_tensor(rng, &shape, 1e-2).data().iter().map(|v| v * 4.0).collect::<Vec<_>>();
            Case {
                inputs: vec![Tensor::new(shape.to_vec(), x).expect("shape")],
                build: Box::new(move |g, v| {
                    let y = if op == CheckedOp::LeakyRelu {
                        g.leaky_relu(v[0], 0.2)
                    } else {
                        g.sigmoid(v[0])
                    };
                    weighted_sum(g, y, &weights)
                }),
            }
        }
        CheckedOp::Bce => {
            let n = rng.random_range(1..=12);
            let probs = Tensor::from_fn(&[n], |_| rng.random_range(0.05..0.95));
            let labels: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
            Case {
                inputs: vec![probs],
                build: Box::new(move |g, v| g.bce(v[0], &labels)),
            }
        }
    }
}

/// Compares analytic and central-difference gradients of `op` on `cases`
/// random small tensors, for every input element.
pub fn check_gradients(op: CheckedOp, cases: usize, step: f64, seed: u64) -> Result<GradCheck> {
    let mut rng = crate::rng::derived(seed, 0x9c4e);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        worst = worst.max(make_case(op, &mut rng).max_error(step)?);
    }
    Ok(GradCheck {
        op,
        cases,
        max_rel_error: worst,
    })
}

/// `|⟨conv(x), y⟩ − ⟨x, convᵀ(y)⟩|` relative to the inner products, with one
/// shared weight and zero bias, over `cases` random geometries. Returns the
/// worst mismatch and how many geometries were valid pairs.
pub fn adjoint_mismatch(cases: usize, seed: u64) -> Result<(f64, usize)> {
    let mut rng = crate::rng::derived(seed, 0xad70);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..cases {
        let cin = rng.random_range(1..=3);
        let cout = rng.random_range(1..=3);
        let kernel = (rng.random_range(1..=4), rng.random_range(1..=4));
        let stride = (rng.random_range(1..=3), rng.random_range(1..=3));
        let padding = (rng.random_range(0..kernel.0), rng.random_range(0..kernel.1));
        let fwd = ConvSpec::new(cin, cout, kernel, stride, padding);
        let back = ConvSpec::new(cout, cin, kernel, stride, padding);
        let (oh, ow) = (rng.random_range(1..=4), rng.random_range(1..=4));
        // Pick the input size the transposed layer produces, so the pair
        // maps between the same two spaces.
        let (h, w) = match back.transposed_output(oh, ow) {
            Ok(hw) => hw,
            Err(_) => continue,
        };
        if fwd.conv_output(h, w).ok() != Some((oh, ow)) {
            continue;
        }
        let n = rng.random_range(1..=2);
        let x = rand_tensor(&mut rng, &[n, cin, h, w], 0.0);
        let y = rand_tensor(&mut rng, &[n, cout, oh, ow], 0.0);
        let weight = rand_tensor(&mut rng, &fwd.conv_weight_shape(), 0.0);
        let mut g = Graph::new();
        let (xv, yv, wv) = (g.constant(x.clone()), g.constant(y.clone()), g.constant(weight));
        let b_out = g.constant(Tensor::zeros(&[cout]));
        let b_in = g.constant(Tensor::zeros(&[cin]));
        let cx = g.conv2d(xv, wv, b_out, &fwd)?;
        let ty = g.conv_transpose2d(yv, wv, b_in, &back)?;
        let lhs = g.value(cx).dot(&y)?;
        let rhs = x.dot(g.value(ty))?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
        checked += 1;
    }
    Ok((worst, checked))
}
