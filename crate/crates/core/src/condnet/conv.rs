use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::XorShift64Star;

/// Square-kernel 2D convolution layer with "same" zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, zero biases.
    pub fn init(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut XorShift64Star,
    ) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels, kernel, stride);
        let bound = 1.0 / ((in_channels * kernel * kernel) as f64).sqrt();
        layer
            .weight
            .iter_mut()
            .for_each(|w| *w = rng.uniform(-bound, bound));
        layer
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.is_multiple_of(2) || self.stride == 0 {
            return Err(Error::Config(format!(
                "conv kernel must be odd and stride positive, got {} / {}",
                self.kernel, self.stride
            )));
        }
        if self.weight.len() != self.out_channels * self.in_channels * self.kernel * self.kernel
            || self.bias.len() != self.out_channels
        {
            return Err(Error::shape(
                "conv parameters",
                format!(
                    "{}x{}x{k}x{k}",
                    self.out_channels,
                    self.in_channels,
                    k = self.kernel
                ),
                format!("{} weights / {} biases", self.weight.len(), self.bias.len()),
            ));
        }
        Ok(())
    }

    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        (height.div_ceil(self.stride), width.div_ceil(self.stride))
    }

    fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weight[((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx]
    }
}

/// Parameter gradients of a [`ConvLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvGrad {
    pub fn zeros_like(layer: &ConvLayer) -> Self {
        Self {
            weight: vec![0.0; layer.weight.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &ConvGrad) {
        self.weight
            .iter_mut()
            .zip(&other.weight)
            .for_each(|(a, b)| *a += b);
        self.bias
            .iter_mut()
            .zip(&other.bias)
            .for_each(|(a, b)| *a += b);
    }
}

/// Input coordinate read by output coordinate `o` at kernel tap `k`.
#[inline]
fn tap(o: usize, k: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
    let i = (o * stride + k) as isize - pad as isize;
    (i >= 0 && (i as usize) < len).then_some(i as usize)
}

/// Cross-correlation with zero padding `kernel / 2`.
pub fn conv2d_forward(x: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    layer.validate()?;
    if x.channels() != layer.in_channels {
        return Err(Error::shape(
            "conv input channels",
            layer.in_channels,
            x.channels(),
        ));
    }
    let (h, w) = (x.height(), x.width());
    let (oh, ow) = layer.output_size(h, w);
    let (k, s, pad) = (layer.kernel, layer.stride, layer.kernel / 2);
    let mut out = Tensor::zeros(layer.out_channels, oh, ow);
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(o, plane)| {
            plane.iter_mut().for_each(|v| *v = layer.bias[o]);
            for i in 0..layer.in_channels {
                let src = x.plane(i);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = layer.w(o, i, ky, kx);
                        if wv == 0.0 {
                            continue;
                        }
                        for oy in 0..oh {
                            let Some(iy) = tap(oy, ky, s, pad, h) else {
                                continue;
                            };
                            let row = &src[iy * w..(iy + 1) * w];
                            let dst = &mut plane[oy * ow..(oy + 1) * ow];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                if let Some(ix) = tap(ox, kx, s, pad, w) {
                                    *d += wv * row[ix];
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Returns the gradients with respect to the input and to the parameters.
pub fn conv2d_backward(
    x: &Tensor,
    layer: &ConvLayer,
    grad_out: &Tensor,
) -> Result<(Tensor, ConvGrad)> {
    layer.validate()?;
    let (h, w) = (x.height(), x.width());
    let (oh, ow) = layer.output_size(h, w);
    if grad_out.shape() != (layer.out_channels, oh, ow) {
        return Err(Error::shape(
            "conv output gradient",
            format!("{:?}", (layer.out_channels, oh, ow)),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let (k, s, pad) = (layer.kernel, layer.stride, layer.kernel / 2);
    let cin = layer.in_channels;

    let mut weight = vec![0.0; layer.weight.len()];
    weight
        .par_chunks_mut(cin * k * k)
        .enumerate()
        .for_each(|(o, wo)| {
            let go = grad_out.plane(o);
            for i in 0..cin {
                let src = x.plane(i);
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let Some(iy) = tap(oy, ky, s, pad, h) else {
                                continue;
                            };
                            for ox in 0..ow {
                                if let Some(ix) = tap(ox, kx, s, pad, w) {
                                    acc += go[oy * ow + ox] * src[iy * w + ix];
                                }
                            }
                        }
                        wo[(i * k + ky) * k + kx] = acc;
                    }
                }
            }
        });
    let bias = (0..layer.out_channels)
        .map(|o| grad_out.plane(o).iter().sum())
        .collect();

    let mut gx = Tensor::zeros(cin, h, w);
    gx.data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(i, gi)| {
            for o in 0..layer.out_channels {
                let go = grad_out.plane(o);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = layer.w(o, i, ky, kx);
                        if wv == 0.0 {
                            continue;
                        }
                        for oy in 0..oh {
                            let Some(iy) = tap(oy, ky, s, pad, h) else {
                                continue;
                            };
                            for ox in 0..ow {
                                if let Some(ix) = tap(ox, kx, s, pad, w) {
                                    gi[iy * w + ix] += wv * go[oy * ow + ox];
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok((gx, ConvGrad { weight, bias }))
}
