use serde::{Deserialize, Serialize};

use super::conv::{conv2d_backward, conv2d_forward, ConvGrad, ConvLayer};
use super::tensor::{relu, relu_backward, Tensor};
use crate::error::{Error, Result};
use crate::rng::XorShift64Star;

/// Cascade of strided conv + ReLU layers that encodes object-level maps into
/// a feature pyramid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub kernel_sizes: Vec<usize>,
    pub strides: Vec<usize>,
    pub channel_sizes: Vec<usize>,
}

impl Default for EmbeddingConfig {
    /// Desk-scale widths with the full-size kernel and stride plan.
    fn default() -> Self {
        Self {
            kernel_sizes: vec![7, 5, 3, 3],
            strides: vec![2, 2, 2, 2],
            channel_sizes: vec![8, 16, 32, 64],
        }
    }
}

impl EmbeddingConfig {
    /// The full-size plan: four stride-2 layers, kernels 7/5/3/3,
    /// 128/256/512/1024 channels.
    pub fn full_size() -> Self {
        Self {
            channel_sizes: vec![128, 256, 512, 1024],
            ..Self::default()
        }
    }

    pub fn num_layers(&self) -> usize {
        self.kernel_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kernel_sizes.len();
        if n == 0 || self.strides.len() != n || self.channel_sizes.len() != n {
            return Err(Error::Config(format!(
                "embedding plan lengths disagree: {} kernels, {} strides, {} channel sizes",
                n,
                self.strides.len(),
                self.channel_sizes.len()
            )));
        }
        if let Some(k) = self.kernel_sizes.iter().find(|&&k| k % 2 == 0) {
            return Err(Error::Config(format!("embedding kernel {k} is not odd")));
        }
        if self.strides.contains(&0) || self.channel_sizes.contains(&0) {
            return Err(Error::Config(
                "embedding strides and channels must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Product of the strides: input sides must be a multiple of this.
    pub fn reduction(&self) -> usize {
        self.strides.iter().product()
    }

    pub fn init(&self, in_channels: usize, rng: &mut XorShift64Star) -> Vec<ConvLayer> {
        let mut cin = in_channels;
        (0..self.num_layers())
            .map(|i| {
                let layer = ConvLayer::init(
                    cin,
                    self.channel_sizes[i],
                    self.kernel_sizes[i],
                    self.strides[i],
                    rng,
                );
                cin = self.channel_sizes[i];
                layer
            })
            .collect()
    }

    fn check_params(&self, in_channels: usize, params: &[ConvLayer]) -> Result<()> {
        self.validate()?;
        if params.len() != self.num_layers() {
            return Err(Error::shape(
                "embedding layers",
                self.num_layers(),
                params.len(),
            ));
        }
        let mut cin = in_channels;
        for (i, p) in params.iter().enumerate() {
            if p.in_channels != cin
                || p.out_channels != self.channel_sizes[i]
                || p.kernel != self.kernel_sizes[i]
                || p.stride != self.strides[i]
            {
                return Err(Error::shape(
                    "embedding layer",
                    format!(
                        "{cin}->{} k{} s{}",
                        self.channel_sizes[i], self.kernel_sizes[i], self.strides[i]
                    ),
                    format!(
                        "{}->{} k{} s{}",
                        p.in_channels, p.out_channels, p.kernel, p.stride
                    ),
                ));
            }
            cin = p.out_channels;
        }
        Ok(())
    }
}

/// Runs the cascade on `object_maps` (zero-padded up to a multiple of the
/// total stride) and returns every layer's output, shallowest first.
pub fn embed_objects(
    object_maps: &Tensor,
    cfg: &EmbeddingConfig,
    params: &[ConvLayer],
) -> Result<Vec<Tensor>> {
    cfg.check_params(object_maps.channels(), params)?;
    let m = cfg.reduction();
    let padded = object_maps.pad_to(
        object_maps.height().next_multiple_of(m),
        object_maps.width().next_multiple_of(m),
    );
    run_cascade(&padded, params)
}

pub(crate) fn run_cascade(input: &Tensor, params: &[ConvLayer]) -> Result<Vec<Tensor>> {
    let mut out: Vec<Tensor> = Vec::with_capacity(params.len());
    for layer in params {
        let src = out.last().unwrap_or(input);
        let y = relu(&conv2d_forward(src, layer)?);
        out.push(y);
    }
    Ok(out)
}

/// Parameter gradients of the cascade, given the gradient reaching each level
/// of the pyramid (`None` for levels nothing consumed).
pub(crate) fn cascade_backward(
    input: &Tensor,
    pyramid: &[Tensor],
    params: &[ConvLayer],
    level_grads: &[Option<Tensor>],
) -> Result<Vec<ConvGrad>> {
    let n = params.len();
    let mut grads: Vec<ConvGrad> = params.iter().map(ConvGrad::zeros_like).collect();
    let mut carried: Option<Tensor> = None;
    for i in (0..n).rev() {
        let g = match (carried.take(), &level_grads[i]) {
            (Some(mut c), Some(l)) => {
                c.add_assign(l);
                Some(c)
            }
            (Some(c), None) => Some(c),
            (None, Some(l)) => Some(l.clone()),
            (None, None) => None,
        };
        let Some(g) = g else { continue };
        let pre = relu_backward(&pyramid[i], &g);
        let src = if i == 0 { input } else { &pyramid[i - 1] };
        let (gx, gp) = conv2d_backward(src, &params[i], &pre)?;
        grads[i] = gp;
        if i > 0 {
            carried = Some(gx);
        }
    }
    Ok(grads)
}
