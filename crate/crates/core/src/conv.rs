//! Dense multi-channel 2-D convolution (cross-correlation, zero padding)
//! with a hand-written backward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    /// `kernel × kernel`, stride 1, padding that preserves spatial size.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            pad: kernel / 2,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.out_channels
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let span = |n: usize| -> Result<usize> {
            let padded = n + 2 * self.pad;
            if padded < self.kernel || self.stride == 0 {
                return Err(Error::Dimension(format!(
                    "input extent {n} too small for kernel {} with padding {}",
                    self.kernel, self.pad
                )));
            }
            Ok((padded - self.kernel) / self.stride + 1)
        };
        Ok((span(h)?, span(w)?))
    }

    #[inline]
    fn widx(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx
    }
}

/// Gradients produced by [`conv2d_backward`].
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor3,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn check(x: &Tensor3, shape: &ConvShape, weights: &[f64], bias: &[f64]) -> Result<()> {
    if x.channels() != shape.in_channels {
        return Err(Error::Dimension(format!(
            "conv expects {} input channels, got {}",
            shape.in_channels,
            x.channels()
        )));
    }
    if weights.len() != shape.weight_len() || bias.len() != shape.out_channels {
        return Err(Error::Dimension(format!(
            "conv parameter lengths {}+{} do not match {:?}",
            weights.len(),
            bias.len(),
            shape
        )));
    }
    Ok(())
}

/// `y[o] = b[o] + Σ_i w[o,i] ⋆ x[i]`.
pub fn conv2d_forward(
    x: &Tensor3,
    shape: &ConvShape,
    weights: &[f64],
    bias: &[f64],
) -> Result<Tensor3> {
    check(x, shape, weights, bias)?;
    let (h, w) = (x.height() as isize, x.width() as isize);
    let (oh, ow) = shape.output_dims(x.height(), x.width())?;
    let (k, s, p) = (shape.kernel, shape.stride as isize, shape.pad as isize);
    let mut out = Tensor3::zeros(shape.out_channels, oh, ow);
    for o in 0..shape.out_channels {
        let plane = out.channel_mut(o);
        plane.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..shape.in_channels {
            let src = x.channel(i);
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weights[shape.widx(o, i, ky, kx)];
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let sy = oy as isize * s + ky as isize - p;
                        if sy < 0 || sy >= h {
                            continue;
                        }
                        let row = &src[sy as usize * w as usize..(sy as usize + 1) * w as usize];
                        for ox in 0..ow {
                            let sx = ox as isize * s + kx as isize - p;
                            if sx >= 0 && sx < w {
                                plane[oy * ow + ox] += wv * row[sx as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of `Σ grad_out ⊙ conv2d_forward(x)` with respect to the input,
/// the weights and the bias.
pub fn conv2d_backward(
    x: &Tensor3,
    shape: &ConvShape,
    weights: &[f64],
    grad_out: &Tensor3,
) -> Result<ConvGrads> {
    let bias_stub = vec![0.0; shape.out_channels];
    check(x, shape, weights, &bias_stub)?;
    let (h, w) = (x.height() as isize, x.width() as isize);
    let (oh, ow) = shape.output_dims(x.height(), x.width())?;
    if grad_out.shape() != (shape.out_channels, oh, ow) {
        return Err(Error::Dimension(format!(
            "conv output gradient {:?} vs expected {:?}",
            grad_out.shape(),
            (shape.out_channels, oh, ow)
        )));
    }
    let (k, s, p) = (shape.kernel, shape.stride as isize, shape.pad as isize);
    let mut gx = Tensor3::zeros(x.channels(), x.height(), x.width());
    let mut gw = vec![0.0; shape.weight_len()];
    let gb: Vec<f64> = (0..shape.out_channels)
        .map(|o| grad_out.channel(o).iter().sum())
        .collect();
    for o in 0..shape.out_channels {
        let go = grad_out.channel(o);
        for i in 0..shape.in_channels {
            let src = x.channel(i);
            for ky in 0..k {
                for kx in 0..k {
                    let wi = shape.widx(o, i, ky, kx);
                    let wv = weights[wi];
                    let mut acc = 0.0;
                    let gxi = gx.channel_mut(i);
                    for oy in 0..oh {
                        let sy = oy as isize * s + ky as isize - p;
                        if sy < 0 || sy >= h {
                            continue;
                        }
                        let base = sy as usize * w as usize;
                        for ox in 0..ow {
                            let sx = ox as isize * s + kx as isize - p;
                            if sx >= 0 && sx < w {
                                let g = go[oy * ow + ox];
                                acc += g * src[base + sx as usize];
                                gxi[base + sx as usize] += g * wv;
                            }
                        }
                    }
                    gw[wi] = acc;
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        weights: gw,
        bias: gb,
    })
}

/// A convolution with owned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub shape: ConvShape,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(shape: ConvShape, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != shape.weight_len() || bias.len() != shape.out_channels {
            return Err(Error::Dimension(format!(
                "parameter lengths {}+{} do not match {:?}",
                weights.len(),
                bias.len(),
                shape
            )));
        }
        Ok(Self {
            shape,
            weights,
            bias,
        })
    }

    pub fn zeros(shape: ConvShape) -> Self {
        Self {
            shape,
            weights: vec![0.0; shape.weight_len()],
            bias: vec![0.0; shape.out_channels],
        }
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        conv2d_forward(x, &self.shape, &self.weights, &self.bias)
    }
}
