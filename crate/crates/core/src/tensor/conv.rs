use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use crate::error::{Error, Result};

/// Kernel geometry and channel counts of one convolution layer.
///
/// Forward convolutions store weights as `[out, in, kh, kw]`; transposed
/// convolutions as `[in, out, kh, kw]`, so a transposed layer with the same
/// weight tensor is the exact adjoint of the forward layer with swapped
/// channel counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Self {
        ConvSpec {
            kernel,
            stride,
            padding,
            in_channels,
            out_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kernel height", self.kernel.0),
            ("kernel width", self.kernel.1),
            ("stride height", self.stride.0),
            ("stride width", self.stride.1),
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Spatial output of a forward convolution: `floor((i + 2p - k) / s) + 1`.
    pub fn conv_output(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let axis = |name: &str, i: usize, k: usize, s: usize, p: usize| {
            if i + 2 * p < k {
                Err(Error::config(format!(
                    "conv {name}: input {i} with padding {p} is smaller than kernel {k}"
                )))
            } else {
                Ok((i + 2 * p - k) / s + 1)
            }
        };
        Ok((
            axis("height", h, self.kernel.0, self.stride.0, self.padding.0)?,
            axis("width", w, self.kernel.1, self.stride.1, self.padding.1)?,
        ))
    }

    /// Spatial output of a transposed convolution: `(i - 1) * s - 2p + k`.
    pub fn transposed_output(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let axis = |name: &str, i: usize, k: usize, s: usize, p: usize| {
            let o = (i as i64 - 1) * s as i64 - 2 * p as i64 + k as i64;
            if i == 0 || o <= 0 {
                Err(Error::config(format!(
                    "transposed conv {name}: input {i}, kernel {k}, stride {s}, padding {p} gives output {o}"
                )))
            } else {
                Ok(o as usize)
            }
        };
        Ok((
            axis("height", h, self.kernel.0, self.stride.0, self.padding.0)?,
            axis("width", w, self.kernel.1, self.stride.1, self.padding.1)?,
        ))
    }

    pub fn conv_weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel.0, self.kernel.1]
    }

    pub fn transposed_weight_shape(&self) -> [usize; 4] {
        [self.in_channels, self.out_channels, self.kernel.0, self.kernel.1]
    }

    fn patch_len(&self) -> usize {
        self.kernel.0 * self.kernel.1
    }
}

/// A window sliding over an image of `channels × height × width`, visiting a
/// `grid_h × grid_w` lattice of positions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sweep {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl Sweep {
    fn cols_len(&self, spec: &ConvSpec) -> usize {
        self.channels * spec.patch_len() * self.batch * self.grid_h * self.grid_w
    }
}

/// Unfolds image patches into a `[channels·kh·kw, batch·grid_h·grid_w]` matrix.
pub(crate) fn im2col(x: &[f64], s: Sweep, spec: &ConvSpec) -> Vec<f64> {
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw) = (spec.padding.0 as isize, spec.padding.1 as isize);
    let grid = s.grid_h * s.grid_w;
    let ncols = s.batch * grid;
    let mut cols = vec![0.0; s.cols_len(spec)];
    for c in 0..s.channels {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                let out = &mut cols[row * ncols..(row + 1) * ncols];
                for n in 0..s.batch {
                    let img = &x[(n * s.channels + c) * s.height * s.width..][..s.height * s.width];
                    for gy in 0..s.grid_h {
                        let y = (gy * sh) as isize - ph + ki as isize;
                        if y < 0 || y >= s.height as isize {
                            continue;
                        }
                        let src = &img[y as usize * s.width..][..s.width];
                        let dst = &mut out[n * grid + gy * s.grid_w..][..s.grid_w];
                        for (gx, d) in dst.iter_mut().enumerate() {
                            let xx = (gx * sw) as isize - pw + kj as isize;
                            if xx >= 0 && xx < s.width as isize {
                                *d = src[xx as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into an image.
pub(crate) fn col2im(cols: &[f64], s: Sweep, spec: &ConvSpec) -> Vec<f64> {
    debug_assert_eq!(cols.len(), s.cols_len(spec));
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw) = (spec.padding.0 as isize, spec.padding.1 as isize);
    let grid = s.grid_h * s.grid_w;
    let ncols = s.batch * grid;
    let mut x = vec![0.0; s.batch * s.channels * s.height * s.width];
    for c in 0..s.channels {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                let src_row = &cols[row * ncols..(row + 1) * ncols];
                for n in 0..s.batch {
                    let img = &mut x[(n * s.channels + c) * s.height * s.width..][..s.height * s.width];
                    for gy in 0..s.grid_h {
                        let y = (gy * sh) as isize - ph + ki as isize;
                        if y < 0 || y >= s.height as isize {
                            continue;
                        }
                        let dst = &mut img[y as usize * s.width..][..s.width];
                        let src = &src_row[n * grid + gy * s.grid_w..][..s.grid_w];
                        for (gx, v) in src.iter().enumerate() {
                            let xx = (gx * sw) as isize - pw + kj as isize;
                            if xx >= 0 && xx < s.width as isize {
                                dst[xx as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// `[batch, channels, hw]` → `[channels, batch·hw]`.
pub(crate) fn to_channel_major(x: &[f64], batch: usize, channels: usize, hw: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for n in 0..batch {
        for c in 0..channels {
            out[(c * batch + n) * hw..][..hw].copy_from_slice(&x[(n * channels + c) * hw..][..hw]);
        }
    }
    out
}

/// `[channels, batch·hw]` → `[batch, channels, hw]`.
pub(crate) fn from_channel_major(x: &[f64], batch: usize, channels: usize, hw: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for n in 0..batch {
        for c in 0..channels {
            out[(n * channels + c) * hw..][..hw].copy_from_slice(&x[(c * batch + n) * hw..][..hw]);
        }
    }
    out
}

fn add_channel_bias(y: &mut [f64], bias: &[f64], batch: usize, hw: usize) {
    let channels = bias.len();
    for n in 0..batch {
        for (c, b) in bias.iter().enumerate() {
            y[(n * channels + c) * hw..][..hw].iter_mut().for_each(|v| *v += b);
        }
    }
}

fn channel_sums(dy: &[f64], batch: usize, channels: usize, hw: usize) -> Vec<f64> {
    let mut sums = vec![0.0; channels];
    for n in 0..batch {
        for (c, s) in sums.iter_mut().enumerate() {
            *s += dy[(n * channels + c) * hw..][..hw].iter().sum::<f64>();
        }
    }
    sums
}

pub(crate) struct ConvForward {
    pub output: Vec<f64>,
    pub out_hw: (usize, usize),
    /// Saved for the weight gradient: forward conv keeps the unfolded input,
    /// transposed conv keeps the channel-major input.
    pub saved: Vec<f64>,
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

pub(crate) fn conv2d_forward(
    x: &[f64],
    batch: usize,
    in_hw: (usize, usize),
    weight: &[f64],
    bias: &[f64],
    spec: &ConvSpec,
) -> Result<ConvForward> {
    let (oh, ow) = spec.conv_output(in_hw.0, in_hw.1)?;
    let sweep = Sweep {
        batch,
        channels: spec.in_channels,
        height: in_hw.0,
        width: in_hw.1,
        grid_h: oh,
        grid_w: ow,
    };
    let cols = im2col(x, sweep, spec);
    let k = spec.in_channels * spec.patch_len();
    let ncols = batch * oh * ow;
    let mut y_cm = vec![0.0; spec.out_channels * ncols];
    gemm(spec.out_channels, k, ncols, weight, false, &cols, false, &mut y_cm, false);
    let mut output = from_channel_major(&y_cm, batch, spec.out_channels, oh * ow);
    add_channel_bias(&mut output, bias, batch, oh * ow);
    Ok(ConvForward {
        output,
        out_hw: (oh, ow),
        saved: cols,
    })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    dy: &[f64],
    batch: usize,
    in_hw: (usize, usize),
    out_hw: (usize, usize),
    weight: &[f64],
    cols: &[f64],
    spec: &ConvSpec,
    need: (bool, bool, bool),
) -> ConvGrads {
    let ohw = out_hw.0 * out_hw.1;
    let ncols = batch * ohw;
    let k = spec.in_channels * spec.patch_len();
    let dy_cm = to_channel_major(dy, batch, spec.out_channels, ohw);
    let input = need.0.then(|| {
        let mut dcols = vec![0.0; k * ncols];
        gemm(k, spec.out_channels, ncols, weight, true, &dy_cm, false, &mut dcols, false);
        let sweep = Sweep {
            batch,
            channels: spec.in_channels,
            height: in_hw.0,
            width: in_hw.1,
            grid_h: out_hw.0,
            grid_w: out_hw.1,
        };
        col2im(&dcols, sweep, spec)
    });
    let weight_grad = need.1.then(|| {
        let mut dw = vec![0.0; spec.out_channels * k];
        gemm(spec.out_channels, ncols, k, &dy_cm, false, cols, true, &mut dw, false);
        dw
    });
    let bias = need
        .2
        .then(|| channel_sums(dy, batch, spec.out_channels, ohw));
    ConvGrads {
        input,
        weight: weight_grad,
        bias,
    }
}

pub(crate) fn conv_transpose2d_forward(
    x: &[f64],
    batch: usize,
    in_hw: (usize, usize),
    weight: &[f64],
    bias: &[f64],
    spec: &ConvSpec,
) -> Result<ConvForward> {
    let (oh, ow) = spec.transposed_output(in_hw.0, in_hw.1)?;
    let ihw = in_hw.0 * in_hw.1;
    let ncols = batch * ihw;
    let k = spec.out_channels * spec.patch_len();
    let x_cm = to_channel_major(x, batch, spec.in_channels, ihw);
    let mut cols = vec![0.0; k * ncols];
    gemm(k, spec.in_channels, ncols, weight, true, &x_cm, false, &mut cols, false);
    let sweep = Sweep {
        batch,
        channels: spec.out_channels,
        height: oh,
        width: ow,
        grid_h: in_hw.0,
        grid_w: in_hw.1,
    };
    let mut output = col2im(&cols, sweep, spec);
    add_channel_bias(&mut output, bias, batch, oh * ow);
    Ok(ConvForward {
        output,
        out_hw: (oh, ow),
        saved: x_cm,
    })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose2d_backward(
    dy: &[f64],
    batch: usize,
    in_hw: (usize, usize),
    out_hw: (usize, usize),
    weight: &[f64],
    x_cm: &[f64],
    spec: &ConvSpec,
    need: (bool, bool, bool),
) -> ConvGrads {
    let ihw = in_hw.0 * in_hw.1;
    let ncols = batch * ihw;
    let k = spec.out_channels * spec.patch_len();
    let sweep = Sweep {
        batch,
        channels: spec.out_channels,
        height: out_hw.0,
        width: out_hw.1,
        grid_h: in_hw.0,
        grid_w: in_hw.1,
    };
    let dcols = im2col(dy, sweep, spec);
    let input = need.0.then(|| {
        let mut dx_cm = vec![0.0; spec.in_channels * ncols];
        gemm(spec.in_channels, k, ncols, weight, false, &dcols, false, &mut dx_cm, false);
        from_channel_major(&dx_cm, batch, spec.in_channels, ihw)
    });
    let weight_grad = need.1.then(|| {
        let mut dw = vec![0.0; spec.in_channels * k];
        gemm(spec.in_channels, ncols, k, x_cm, false, &dcols, true, &mut dw, false);
        dw
    });
    let bias = need
        .2
        .then(|| channel_sums(dy, batch, spec.out_channels, out_hw.0 * out_hw.1));
    ConvGrads {
        input,
        weight: weight_grad,
        bias,
    }
}
