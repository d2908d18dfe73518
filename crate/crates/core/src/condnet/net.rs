//! Toy part-segmentation network conditioned on object maps.
//!
//! With `k` stages the layout is:
//!
//! * encoder: `k` stride-2 conv + ReLU stages, the last at `1/2^k` resolution;
//! * embedding: the object cascade `S_1..S_k`, level `j` at `1/2^j`;
//! * decoder stage 1: conv + ReLU on the deepest encoder output (`1/2^k`);
//!   stage `i > 1`: ×2 nearest upsample of the previous stage's features,
//!   then conv + ReLU, landing at `1/2^(k+1-i)`;
//! * after stage `i` the features are concatenated (decoder channels first)
//!   with pyramid level `k + 1 - i`, which has the same resolution;
//! * head: ×2 upsample to full resolution, 1×1 conv to the part channels,
//!   per-pixel softmax.
//!
//! `Conditioning::Single` only concatenates at stage 1 (the deepest level)
//! and `Conditioning::Off` never does.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conv::{conv2d_backward, conv2d_forward, ConvGrad, ConvLayer};
use super::embed::{cascade_backward, run_cascade, EmbeddingConfig};
use super::tensor::{
    concat_channels, match_spatial, match_spatial_backward, relu, relu_backward, softmax,
    softmax_backward, split_channels, upsample2, upsample2_backward, Tensor,
};
use crate::error::{Error, Result};
use crate::rng::XorShift64Star;
use crate::segmap::ProbMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conditioning {
    #[default]
    Multi,
    Single,
    Off,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyNetConfig {
    pub num_parts: usize,
    pub num_objects: usize,
    pub input_channels: usize,
    /// One entry per encoder stage; its length is `k`.
    pub encoder_channels: Vec<usize>,
    /// One entry per decoder stage.
    pub decoder_channels: Vec<usize>,
    /// Kernel of the encoder and decoder convolutions.
    pub kernel: usize,
    pub embedding: EmbeddingConfig,
    pub conditioning: Conditioning,
    pub seed: u64,
}

impl Default for ToyNetConfig {
    fn default() -> Self {
        Self {
            num_parts: 7,
            num_objects: 4,
            input_channels: 3,
            encoder_channels: vec![8, 16, 16, 32],
            decoder_channels: vec![16, 16, 8, 8],
            kernel: 3,
            embedding: EmbeddingConfig::default(),
            conditioning: Conditioning::Multi,
            seed: 7,
        }
    }
}

/// Pyramid level (1-based) concatenated after decoder stage `stage` (1-based).
pub fn conditioned_level(stage: usize, k: usize, mode: Conditioning) -> Option<usize> {
    match mode {
        Conditioning::Multi => Some(k + 1 - stage),
        Conditioning::Single => (stage == 1).then_some(k),
        Conditioning::Off => None,
    }
}

impl ToyNetConfig {
    pub fn stages(&self) -> usize {
        self.encoder_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.stages();
        if k == 0 {
            return Err(Error::Config("network needs at least one stage".into()));
        }
        if self.decoder_channels.len() != k {
            return Err(Error::Config(format!(
                "{k} encoder stages but {} decoder stages",
                self.decoder_channels.len()
            )));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel {} is not odd", self.kernel)));
        }
        if self.num_parts == 0 || self.num_objects == 0 || self.input_channels == 0 {
            return Err(Error::Config(
                "part, object and input channel counts must be positive".into(),
            ));
        }
        if self.encoder_channels.contains(&0) || self.decoder_channels.contains(&0) {
            return Err(Error::Config("stage widths must be positive".into()));
        }
        if self.conditioning != Conditioning::Off {
            self.embedding.validate()?;
            if self.embedding.num_layers() != k {
                return Err(Error::Config(format!(
                    "embedding has {} layers but the decoder has {k} stages",
                    self.embedding.num_layers()
                )));
            }
        }
        Ok(())
    }

    fn cond_channels(&self, stage: usize) -> usize {
        conditioned_level(stage, self.stages(), self.conditioning)
            .map_or(0, |level| self.embedding.channel_sizes[level - 1])
    }

    /// Input sides are zero-padded up to a multiple of this.
    pub fn spatial_multiple(&self) -> usize {
        let enc = 1usize << self.stages();
        if self.conditioning == Conditioning::Off {
            return enc;
        }
        let emb = self.embedding.reduction();
        enc / gcd(enc, emb) * emb
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    pub embed: Vec<ConvLayer>,
    pub encoder: Vec<ConvLayer>,
    pub decoder: Vec<ConvLayer>,
    pub head: ConvLayer,
}

impl ToyParams {
    /// Fan-in scaled uniform initialisation from `cfg.seed`.
    pub fn init(cfg: &ToyNetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = XorShift64Star::new(cfg.seed);
        let k = cfg.stages();
        let mut cin = cfg.input_channels;
        let encoder = cfg
            .encoder_channels
            .iter()
            .map(|&c| {
                let l = ConvLayer::init(cin, c, cfg.kernel, 2, &mut rng);
                cin = c;
                l
            })
            .collect();
        let decoder = (1..=k)
            .map(|stage| {
                let cin = if stage == 1 {
                    cfg.encoder_channels[k - 1]
                } else {
                    cfg.decoder_channels[stage - 2] + cfg.cond_channels(stage - 1)
                };
                ConvLayer::init(
                    cin,
                    cfg.decoder_channels[stage - 1],
                    cfg.kernel,
                    1,
                    &mut rng,
                )
            })
            .collect();
        let head = ConvLayer::init(
            cfg.decoder_channels[k - 1] + cfg.cond_channels(k),
            cfg.num_parts,
            1,
            1,
            &mut rng,
        );
        let embed = if cfg.conditioning == Conditioning::Off {
            Vec::new()
        } else {
            cfg.embedding.init(cfg.num_objects, &mut rng)
        };
        Ok(Self {
            embed,
            encoder,
            decoder,
            head,
        })
    }

    /// Every layer with a stable name, in serialisation order.
    pub fn named_layers(&self) -> Vec<(String, &ConvLayer)> {
        let mut out = Vec::new();
        for (group, layers) in [
            ("embed", &self.embed),
            ("encoder", &self.encoder),
            ("decoder", &self.decoder),
        ] {
            out.extend(
                layers
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (format!("{group}.{i}"), l)),
            );
        }
        out.push(("head".into(), &self.head));
        out
    }

    pub fn named_layers_mut(&mut self) -> Vec<(String, &mut ConvLayer)> {
        let mut out = Vec::new();
        for (group, layers) in [
            ("embed", &mut self.embed),
            ("encoder", &mut self.encoder),
            ("decoder", &mut self.decoder),
        ] {
            out.extend(
                layers
                    .iter_mut()
                    .enumerate()
                    .map(|(i, l)| (format!("{group}.{i}"), l)),
            );
        }
        out.push(("head".into(), &mut self.head));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.named_layers()
            .iter()
            .map(|(_, l)| l.weight.len() + l.bias.len())
            .sum()
    }

    /// `self -= lr * grads`, layer by layer.
    pub fn sgd_step(&mut self, grads: &ToyGrads, lr: f64) {
        for ((_, layer), g) in self.named_layers_mut().into_iter().zip(grads.in_order()) {
            layer
                .weight
                .iter_mut()
                .zip(&g.weight)
                .for_each(|(w, d)| *w -= lr * d);
            layer
                .bias
                .iter_mut()
                .zip(&g.bias)
                .for_each(|(b, d)| *b -= lr * d);
        }
    }

    fn check(&self, cfg: &ToyNetConfig) -> Result<()> {
        let reference = ToyParams::init(cfg)?;
        let mine = self.named_layers();
        let theirs = reference.named_layers();
        if mine.len() != theirs.len() {
            return Err(Error::shape("network layers", theirs.len(), mine.len()));
        }
        for ((name, a), (_, b)) in mine.iter().zip(&theirs) {
            if (a.in_channels, a.out_channels, a.kernel, a.stride)
                != (b.in_channels, b.out_channels, b.kernel, b.stride)
            {
                return Err(Error::ShapeMismatch {
                    what: "layer geometry",
                    expected: format!(
                        "{name}: {}->{} k{} s{}",
                        b.in_channels, b.out_channels, b.kernel, b.stride
                    ),
                    actual: format!(
                        "{}->{} k{} s{}",
                        a.in_channels, a.out_channels, a.kernel, a.stride
                    ),
                });
            }
            a.validate()?;
        }
        Ok(())
    }
}

/// Gradients for every layer of [`ToyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ToyGrads {
    pub embed: Vec<ConvGrad>,
    pub encoder: Vec<ConvGrad>,
    pub decoder: Vec<ConvGrad>,
    pub head: ConvGrad,
}

impl ToyGrads {
    pub fn zeros_like(p: &ToyParams) -> Self {
        Self {
            embed: p.embed.iter().map(ConvGrad::zeros_like).collect(),
            encoder: p.encoder.iter().map(ConvGrad::zeros_like).collect(),
            decoder: p.decoder.iter().map(ConvGrad::zeros_like).collect(),
            head: ConvGrad::zeros_like(&p.head),
        }
    }

    pub fn in_order(&self) -> impl Iterator<Item = &ConvGrad> {
        self.embed
            .iter()
            .chain(&self.encoder)
            .chain(&self.decoder)
            .chain(std::iter::once(&self.head))
    }

    fn in_order_mut(&mut self) -> impl Iterator<Item = &mut ConvGrad> {
        self.embed
            .iter_mut()
            .chain(&mut self.encoder)
            .chain(&mut self.decoder)
            .chain(std::iter::once(&mut self.head))
    }

    pub fn add_assign(&mut self, other: &ToyGrads) {
        for (a, b) in self.in_order_mut().zip(other.in_order()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.in_order_mut() {
            g.weight.iter_mut().for_each(|v| *v *= s);
            g.bias.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Concatenates conditioning features onto decoder features, resampling the
/// conditioning grid when the sizes differ; `None` passes `decoder_feat` through.
pub fn concat_condition(decoder_feat: &Tensor, cond: Option<&Tensor>) -> Result<Tensor> {
    match cond {
        None => Ok(decoder_feat.clone()),
        Some(c) => {
            let c = match_spatial(c, decoder_feat.height(), decoder_feat.width())?;
            concat_channels(decoder_feat, &c)
        }
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    height: usize,
    width: usize,
    x: Tensor,
    objects: Option<Tensor>,
    pyramid: Vec<Tensor>,
    encoder: Vec<Tensor>,
    dec_inputs: Vec<Tensor>,
    dec_outputs: Vec<Tensor>,
    head_input: Tensor,
    pub probs: ProbMap,
}

fn stage_err(stage: &'static str) -> impl Fn(Error) -> Error {
    move |e| e.in_component(stage)
}

/// Forward pass returning the per-pixel part probabilities.
pub fn toy_forward(
    x: &Tensor,
    object_probs: &ProbMap,
    cfg: &ToyNetConfig,
    params: &ToyParams,
) -> Result<ProbMap> {
    Ok(toy_forward_cached(x, object_probs, cfg, params)?.probs)
}

pub fn toy_forward_cached(
    x: &Tensor,
    object_probs: &ProbMap,
    cfg: &ToyNetConfig,
    params: &ToyParams,
) -> Result<ForwardCache> {
    cfg.validate()?;
    params.check(cfg)?;
    if x.channels() != cfg.input_channels {
        return Err(Error::shape(
            "input channels",
            cfg.input_channels,
            x.channels(),
        ));
    }
    if (object_probs.height(), object_probs.width()) != (x.height(), x.width()) {
        return Err(Error::shape(
            "object map vs image",
            format!("{}x{}", x.width(), x.height()),
            format!("{}x{}", object_probs.width(), object_probs.height()),
        ));
    }
    if object_probs.num_classes() != cfg.num_objects {
        return Err(Error::shape(
            "object channels",
            cfg.num_objects,
            object_probs.num_classes(),
        ));
    }
    let k = cfg.stages();
    let (h, w) = (x.height(), x.width());
    let m = cfg.spatial_multiple();
    let (hp, wp) = (h.next_multiple_of(m), w.next_multiple_of(m));
    let xp = x.pad_to(hp, wp);

    let (objects, pyramid) = if cfg.conditioning == Conditioning::Off {
        (None, Vec::new())
    } else {
        let o = Tensor::from_prob_map(object_probs).pad_to(hp, wp);
        let pyr = run_cascade(&o, &params.embed).map_err(stage_err("embedding"))?;
        (Some(o), pyr)
    };

    let mut encoder: Vec<Tensor> = Vec::with_capacity(k);
    for layer in &params.encoder {
        let src = encoder.last().unwrap_or(&xp);
        encoder.push(relu(
            &conv2d_forward(src, layer).map_err(stage_err("encoder"))?,
        ));
    }

    let mut dec_inputs = Vec::with_capacity(k);
    let mut dec_outputs = Vec::with_capacity(k);
    let mut feat = encoder[k - 1].clone();
    for stage in 1..=k {
        let input = if stage == 1 { feat } else { upsample2(&feat) };
        let d = relu(
            &conv2d_forward(&input, &params.decoder[stage - 1]).map_err(stage_err("decoder"))?,
        );
        let cond = conditioned_level(stage, k, cfg.conditioning).map(|lvl| &pyramid[lvl - 1]);
        feat = concat_condition(&d, cond).map_err(stage_err("conditioning"))?;
        dec_inputs.push(input);
        dec_outputs.push(d);
    }
    let head_input = upsample2(&feat);
    let logits = conv2d_forward(&head_input, &params.head).map_err(stage_err("head"))?;
    let probs = softmax(&logits.crop_to(h, w));
    Ok(ForwardCache {
        height: h,
        width: w,
        x: xp,
        objects,
        pyramid,
        encoder,
        dec_inputs,
        dec_outputs,
        head_input,
        probs,
    })
}

/// Gradients of the parameters and of the image input, given the gradient of
/// the loss with respect to the output probabilities (channel-last).
pub fn toy_backward(
    cfg: &ToyNetConfig,
    params: &ToyParams,
    cache: &ForwardCache,
    grad_probs: &[f64],
) -> Result<(ToyGrads, Tensor)> {
    if grad_probs.len() != cache.probs.probs().len() {
        return Err(Error::shape(
            "probability gradient",
            cache.probs.probs().len(),
            grad_probs.len(),
        ));
    }
    let k = cfg.stages();
    let (hp, wp) = (cache.x.height(), cache.x.width());
    let mut grads = ToyGrads::zeros_like(params);

    let d_logits = softmax_backward(&cache.probs, grad_probs).pad_to(hp, wp);
    let (mut d_feat, g) = conv2d_backward(&cache.head_input, &params.head, &d_logits)?;
    grads.head = g;
    d_feat = upsample2_backward(&d_feat);

    let mut level_grads: Vec<Option<Tensor>> = vec![None; cache.pyramid.len()];
    let mut d_enc = None;
    for stage in (1..=k).rev() {
        let d_out = &cache.dec_outputs[stage - 1];
        let d_d = match conditioned_level(stage, k, cfg.conditioning) {
            Some(level) => {
                let (dd, dc) = split_channels(&d_feat, d_out.channels());
                let src = &cache.pyramid[level - 1];
                let dc = match_spatial_backward(&dc, src.height(), src.width());
                match &mut level_grads[level - 1] {
                    Some(acc) => acc.add_assign(&dc),
                    slot => *slot = Some(dc),
                }
                dd
            }
            None => d_feat,
        };
        let pre = relu_backward(d_out, &d_d);
        let (d_in, g) = conv2d_backward(
            &cache.dec_inputs[stage - 1],
            &params.decoder[stage - 1],
            &pre,
        )?;
        grads.decoder[stage - 1] = g;
        if stage == 1 {
            d_enc = Some(d_in);
            d_feat = Tensor::zeros(0, 0, 0);
        } else {
            d_feat = upsample2_backward(&d_in);
        }
    }

    let mut d = d_enc.expect("at least one stage");
    for i in (0..k).rev() {
        let pre = relu_backward(&cache.encoder[i], &d);
        let src = if i == 0 {
            &cache.x
        } else {
            &cache.encoder[i - 1]
        };
        let (dx, g) = conv2d_backward(src, &params.encoder[i], &pre)?;
        grads.encoder[i] = g;
        d = dx;
    }

    if let Some(objects) = &cache.objects {
        grads.embed = cascade_backward(objects, &cache.pyramid, &params.embed, &level_grads)?;
    }
    Ok((grads, d.crop_to(cache.height, cache.width)))
}

/// Runs `f` over `items` in parallel and returns the results in input order.
pub(crate) fn ordered_par_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> R + Sync + Send,
) -> Vec<R> {
    items.par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmap::{one_hot, LabelMap};

    fn small_cfg(mode: Conditioning) -> ToyNetConfig {
        ToyNetConfig {
            num_parts: 4,
            num_objects: 3,
            encoder_channels: vec![4, 6],
            decoder_channels: vec![5, 4],
            embedding: EmbeddingConfig {
                kernel_sizes: vec![3, 3],
                strides: vec![2, 2],
                channel_sizes: vec![3, 5],
            },
            conditioning: mode,
            ..ToyNetConfig::default()
        }
    }

    fn inputs(h: usize, w: usize, seed: u64) -> (Tensor, ProbMap) {
        let mut rng = XorShift64Star::new(seed);
        let x = Tensor::new(
            3,
            h,
            w,
            (0..3 * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let objs =
            LabelMap::new(w, h, 3, (0..h * w).map(|_| rng.below(3) as u16).collect()).unwrap();
        (x, one_hot(&objs, 3).unwrap())
    }

    #[test]
    fn stage_wiring() {
        for k in 1..=6 {
            let levels: Vec<_> = (1..=k)
                .map(|i| conditioned_level(i, k, Conditioning::Multi).unwrap())
                .collect();
            let expect: Vec<_> = (1..=k).rev().collect();
            assert_eq!(levels, expect);
            for i in 1..=k {
                assert_eq!(
                    conditioned_level(i, k, Conditioning::Single),
                    (i == 1).then_some(k)
                );
                assert_eq!(conditioned_level(i, k, Conditioning::Off), None);
            }
        }
    }

    #[test]
    fn output_is_on_simplex() {
        for mode in [Conditioning::Multi, Conditioning::Single, Conditioning::Off] {
            let cfg = small_cfg(mode);
            let params = ToyParams::init(&cfg).unwrap();
            let (x, o) = inputs(8, 12, 3);
            let p = toy_forward(&x, &o, &cfg, &params).unwrap();
            assert_eq!((p.width(), p.height(), p.num_classes()), (12, 8, 4));
            assert!(ProbMap::new(12, 8, 4, p.into_probs()).is_ok());
        }
    }

    #[test]
    fn odd_sizes_are_padded_and_cropped() {
        let cfg = small_cfg(Conditioning::Multi);
        let params = ToyParams::init(&cfg).unwrap();
        let (x, o) = inputs(7, 9, 4);
        let p = toy_forward(&x, &o, &cfg, &params).unwrap();
        assert_eq!((p.width(), p.height()), (9, 7));
    }

    #[test]
    fn off_ignores_objects() {
        let cfg = small_cfg(Conditioning::Off);
        let params = ToyParams::init(&cfg).unwrap();
        let (x, o1) = inputs(8, 8, 5);
        let (_, o2) = inputs(8, 8, 6);
        let a = toy_forward(&x, &o1, &cfg, &params).unwrap();
        let b = toy_forward(&x, &o2, &cfg, &params).unwrap();
        assert_eq!(a, b);
        let cfg = small_cfg(Conditioning::Multi);
        let params = ToyParams::init(&cfg).unwrap();
        assert_ne!(
            toy_forward(&x, &o1, &cfg, &params).unwrap(),
            toy_forward(&x, &o2, &cfg, &params).unwrap()
        );
    }

    #[test]
    fn head_permutation_is_equivariant() {
        let cfg = small_cfg(Conditioning::Multi);
        let params = ToyParams::init(&cfg).unwrap();
        let (x, o) = inputs(8, 8, 7);
        let base = toy_forward(&x, &o, &cfg, &params).unwrap();
        let perm = [2usize, 0, 3, 1];
        let mut permuted = params.clone();
        let per = permuted.head.in_channels;
        for (new, &old) in perm.iter().enumerate() {
            permuted.head.weight[new * per..(new + 1) * per]
                .copy_from_slice(&params.head.weight[old * per..(old + 1) * per]);
            permuted.head.bias[new] = params.head.bias[old];
        }
        let out = toy_forward(&x, &o, &cfg, &permuted).unwrap();
        for p in 0..64 {
            for (new, &old) in perm.iter().enumerate() {
                assert!((out.pixel(p)[new] - base.pixel(p)[old]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn geometry_errors() {
        let cfg = small_cfg(Conditioning::Multi);
        let params = ToyParams::init(&cfg).unwrap();
        let (x, _) = inputs(8, 8, 1);
        let (_, o) = inputs(8, 4, 1);
        assert!(toy_forward(&x, &o, &cfg, &params).is_err());
        let single = ToyParams::init(&small_cfg(Conditioning::Single)).unwrap();
        let (x, o) = inputs(8, 8, 1);
        assert!(toy_forward(&x, &o, &cfg, &single).is_err());
        let bad = ToyNetConfig {
            decoder_channels: vec![4],
            ..small_cfg(Conditioning::Multi)
        };
        assert!(ToyParams::init(&bad).is_err());
    }

    #[test]
    fn concat_condition_examples() {
        let d = Tensor::new(4, 8, 8, vec![1.0; 256]).unwrap();
        let s = Tensor::new(6, 8, 8, vec![2.0; 384]).unwrap();
        let f = concat_condition(&d, Some(&s)).unwrap();
        assert_eq!(f.shape(), (10, 8, 8));
        assert_eq!(f.data()[0], 1.0);
        assert_eq!(concat_condition(&d, None).unwrap(), d);
        let small = Tensor::new(6, 4, 4, vec![3.0; 96]).unwrap();
        assert_eq!(
            concat_condition(&d, Some(&small)).unwrap().shape(),
            (10, 8, 8)
        );
    }
}
