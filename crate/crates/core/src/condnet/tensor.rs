use crate::error::{Error, Result};
use crate::segmap::ProbMap;

/// Channel-major rank-3 array (`channels × height × width`).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(
                "tensor data",
                channels * height * width,
                data.len(),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
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

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.plane_len()..(c + 1) * self.plane_len()]
    }

    /// Channel-last probabilities to channel-major.
    pub fn from_prob_map(map: &ProbMap) -> Self {
        let (w, h, c) = (map.width(), map.height(), map.num_classes());
        let mut data = vec![0.0; c * h * w];
        for (p, px) in map.probs().chunks_exact(c).enumerate() {
            for (k, &v) in px.iter().enumerate() {
                data[k * h * w + p] = v;
            }
        }
        Self {
            channels: c,
            height: h,
            width: w,
            data,
        }
    }

    /// Channel-major to channel-last layout, without any simplex check.
    pub fn to_channel_last(&self) -> Vec<f64> {
        let (c, n) = (self.channels, self.plane_len());
        let mut out = vec![0.0; c * n];
        for k in 0..c {
            for p in 0..n {
                out[p * c + k] = self.data[k * n + p];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }

    /// Zero-pads on the bottom and right.
    pub fn pad_to(&self, height: usize, width: usize) -> Tensor {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut out = Tensor::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for y in 0..self.height.min(height) {
                for x in 0..self.width.min(width) {
                    out.data[(c * height + y) * width + x] = self.get(c, y, x);
                }
            }
        }
        out
    }

    /// Keeps the top-left `height × width` window.
    pub fn crop_to(&self, height: usize, width: usize) -> Tensor {
        self.pad_to(height, width)
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
        ..*x
    }
}

/// Gradient through ReLU given its output.
pub fn relu_backward(out: &Tensor, grad: &Tensor) -> Tensor {
    Tensor {
        data: out
            .data
            .iter()
            .zip(&grad.data)
            .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
            .collect(),
        ..*grad
    }
}

/// Nearest-neighbour ×2 upsampling.
pub fn upsample2(x: &Tensor) -> Tensor {
    let (c, h, w) = x.shape();
    let mut out = Tensor::zeros(c, 2 * h, 2 * w);
    for k in 0..c {
        for y in 0..2 * h {
            for xx in 0..2 * w {
                out.data[(k * 2 * h + y) * 2 * w + xx] = x.get(k, y / 2, xx / 2);
            }
        }
    }
    out
}

pub fn upsample2_backward(grad: &Tensor) -> Tensor {
    let (c, h2, w2) = grad.shape();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = Tensor::zeros(c, h, w);
    for k in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                out.data[(k * h + y / 2) * w + x / 2] += grad.get(k, y, x);
            }
        }
    }
    out
}

/// Source index for each destination index along one axis: a smaller axis is
/// nearest-neighbour upsampled by the smallest integer factor that covers the
/// target, then both cases are centre-cropped.
fn axis_map(src: usize, dst: usize) -> Vec<usize> {
    if src >= dst {
        let off = (src - dst) / 2;
        (0..dst).map(|i| i + off).collect()
    } else {
        let f = dst.div_ceil(src);
        let off = (src * f - dst) / 2;
        (0..dst).map(|i| (i + off) / f).collect()
    }
}

/// Resamples the spatial grid of `x` to `height × width` (upsample, then crop).
pub fn match_spatial(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    if x.height == 0 || x.width == 0 || height == 0 || width == 0 {
        return Err(Error::shape(
            "conditioning features",
            format!("{height}x{width}"),
            format!("{}x{}", x.height, x.width),
        ));
    }
    if x.height == height && x.width == width {
        return Ok(x.clone());
    }
    let (ys, xs) = (axis_map(x.height, height), axis_map(x.width, width));
    let mut out = Tensor::zeros(x.channels, height, width);
    for c in 0..x.channels {
        for (y, &sy) in ys.iter().enumerate() {
            for (xx, &sx) in xs.iter().enumerate() {
                out.data[(c * height + y) * width + xx] = x.get(c, sy, sx);
            }
        }
    }
    Ok(out)
}

pub fn match_spatial_backward(grad: &Tensor, src_height: usize, src_width: usize) -> Tensor {
    let (ys, xs) = (
        axis_map(src_height, grad.height),
        axis_map(src_width, grad.width),
    );
    let mut out = Tensor::zeros(grad.channels, src_height, src_width);
    for c in 0..grad.channels {
        for (y, &sy) in ys.iter().enumerate() {
            for (x, &sx) in xs.iter().enumerate() {
                out.data[(c * src_height + sy) * src_width + sx] += grad.get(c, y, x);
            }
        }
    }
    out
}

/// Channel-wise concatenation, `first` block first.
pub fn concat_channels(first: &Tensor, second: &Tensor) -> Result<Tensor> {
    if first.height != second.height || first.width != second.width {
        return Err(Error::shape(
            "concatenation spatial size",
            format!("{}x{}", first.height, first.width),
            format!("{}x{}", second.height, second.width),
        ));
    }
    let mut data = first.data.clone();
    data.extend_from_slice(&second.data);
    Tensor::new(
        first.channels + second.channels,
        first.height,
        first.width,
        data,
    )
}

/// Splits a gradient of a concatenation back into its two blocks.
pub fn split_channels(grad: &Tensor, first_channels: usize) -> (Tensor, Tensor) {
    let n = first_channels * grad.plane_len();
    let a = Tensor {
        channels: first_channels,
        data: grad.data[..n].to_vec(),
        ..*grad
    };
    let b = Tensor {
        channels: grad.channels - first_channels,
        data: grad.data[n..].to_vec(),
        ..*grad
    };
    (a, b)
}

/// Per-pixel softmax over channels, as a probability map.
pub fn softmax(logits: &Tensor) -> ProbMap {
    let (c, n) = (logits.channels, logits.plane_len());
    let mut out = vec![0.0; c * n];
    for p in 0..n {
        let m = (0..c)
            .map(|k| logits.data[k * n + p])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for k in 0..c {
            let e = (logits.data[k * n + p] - m).exp();
            out[p * c + k] = e;
            sum += e;
        }
        out[p * c..(p + 1) * c].iter_mut().for_each(|v| *v /= sum);
    }
    ProbMap::new_unchecked(logits.width, logits.height, c, out).expect("softmax shape")
}

/// Gradient w.r.t. the logits given the softmax output and the gradient with
/// respect to it (both channel-last).
pub fn softmax_backward(probs: &ProbMap, grad_probs: &[f64]) -> Tensor {
    let (c, n) = (probs.num_classes(), probs.num_pixels());
    let mut out = Tensor::zeros(c, probs.height(), probs.width());
    for p in 0..n {
        let px = probs.pixel(p);
        let g = &grad_probs[p * c..(p + 1) * c];
        let dot: f64 = px.iter().zip(g).map(|(a, b)| a * b).sum();
        for k in 0..c {
            out.data[k * n + p] = px[k] * (g[k] - dot);
        }
    }
    out
}
