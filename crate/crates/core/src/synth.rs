//! Seeded synthetic scenes with a known part adjacency structure.
//!
//! Class 0 is background (part 0 and object 0). Object `j` (1-based) owns
//! `parts_per_object[j - 1]` consecutive part ids. Every object lives in its
//! own vertical column of the canvas, inset by at least two pixels on every
//! side, so parts of different objects are at least four background pixels
//! apart and only touch through the background.
//!
//! * `stacked_rects`: the object is a rectangle cut into horizontal bands,
//!   first part on top, so consecutive parts share an edge.
//! * `nested_blobs`: the object is an ellipse cut into concentric rings, the
//!   first part outermost.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condnet::{Sample, Tensor};
use crate::error::{Error, Result};
use crate::rng::XorShift64Star;
use crate::segmap::{one_hot, project_labels, LabelMap, PartsToObjectsMapping};

/// Minimum canvas side.
pub const MIN_SIDE: usize = 8;
const MARGIN: usize = 2;
const NOISE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    StackedRects,
    NestedBlobs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Foreground objects; background is added on top of these.
    pub num_objects: usize,
    pub parts_per_object: Vec<usize>,
    /// Minimum pixel count of every part.
    pub min_instance: usize,
    pub layout: Layout,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            num_objects: 3,
            parts_per_object: vec![2, 2, 2],
            min_instance: 4,
            layout: Layout::StackedRects,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn num_parts(&self) -> usize {
        1 + self.parts_per_object.iter().sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_SIDE || self.height < MIN_SIDE {
            return Err(Error::Config(format!(
                "canvas {}x{} is smaller than {MIN_SIDE}x{MIN_SIDE}",
                self.width, self.height
            )));
        }
        if self.num_objects == 0 || self.parts_per_object.len() != self.num_objects {
            return Err(Error::Config(format!(
                "{} objects but {} part counts",
                self.num_objects,
                self.parts_per_object.len()
            )));
        }
        if self.parts_per_object.contains(&0) {
            return Err(Error::Config("every object needs at least one part".into()));
        }
        if self.num_parts() > u16::MAX as usize {
            return Err(Error::Config(format!(
                "{} parts exceed the label range",
                self.num_parts()
            )));
        }
        Ok(())
    }

    pub fn mapping(&self) -> Result<PartsToObjectsMapping> {
        let mut boundaries = vec![0, 1];
        for &p in &self.parts_per_object {
            boundaries.push(boundaries.last().unwrap() + p);
        }
        PartsToObjectsMapping::new(boundaries)
    }

    /// Copy of the spec with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub parts: LabelMap,
    pub objects: LabelMap,
    pub mapping: PartsToObjectsMapping,
    /// 3 × height × width, values in [0, 1].
    pub rgb: Tensor,
}

impl Scene {
    /// Training example with ground-truth one-hot object maps as conditioning.
    pub fn to_sample(&self) -> Result<Sample> {
        Ok(Sample {
            image: self.rgb.clone(),
            parts: self.parts.clone(),
            objects: self.objects.clone(),
            object_probs: one_hot(&self.objects, self.mapping.num_objects())?,
        })
    }
}

struct Column {
    x0: usize,
    x1: usize,
}

fn columns(spec: &SceneSpec) -> Result<Vec<Column>> {
    let w = spec.width / spec.num_objects;
    if w < 2 * MARGIN + 1 {
        return Err(Error::Sizing(format!(
            "{} objects need at least {} pixels of width, canvas has {}",
            spec.num_objects,
            spec.num_objects * (2 * MARGIN + 1),
            spec.width
        )));
    }
    Ok((0..spec.num_objects)
        .map(|j| Column {
            x0: j * w + MARGIN,
            x1: (j + 1) * w - MARGIN,
        })
        .collect())
}

/// Splits `total` into `n` parts each at least `min`, the surplus spread by
/// random cut points.
fn split(total: usize, n: usize, min: usize, rng: &mut XorShift64Star) -> Vec<usize> {
    let extra = total - n * min;
    let mut cuts: Vec<usize> = (0..n - 1).map(|_| rng.range_inclusive(0, extra)).collect();
    cuts.sort_unstable();
    let mut prev = 0;
    let mut out = Vec::with_capacity(n);
    for c in cuts.into_iter().chain(std::iter::once(extra)) {
        out.push(min + c - prev);
        prev = c;
    }
    out
}

fn stacked(spec: &SceneSpec, labels: &mut [u16], rng: &mut XorShift64Star) -> Result<()> {
    let avail_h = spec.height - 2 * MARGIN;
    let mut first_part = 1;
    for (col, &p) in columns(spec)?.iter().zip(&spec.parts_per_object) {
        let avail_w = col.x1 - col.x0;
        let rw = rng.range_inclusive(avail_w.div_ceil(2), avail_w);
        let band_min = spec.min_instance.div_ceil(rw).max(1);
        if p * band_min > avail_h {
            return Err(Error::Sizing(format!(
                "{p} bands of at least {band_min} rows do not fit in {avail_h} rows"
            )));
        }
        let rh = rng.range_inclusive((p * band_min).max(avail_h.div_ceil(2)), avail_h);
        let bands = split(rh, p, band_min, rng);
        let x0 = col.x0 + rng.range_inclusive(0, avail_w - rw);
        let mut y = MARGIN + rng.range_inclusive(0, avail_h - rh);
        for (k, &bh) in bands.iter().enumerate() {
            for yy in y..y + bh {
                labels[yy * spec.width + x0..yy * spec.width + x0 + rw]
                    .fill((first_part + k) as u16);
            }
            y += bh;
        }
        first_part += p;
    }
    Ok(())
}

fn nested(spec: &SceneSpec, labels: &mut [u16], rng: &mut XorShift64Star) -> Result<()> {
    let avail_h = spec.height - 2 * MARGIN;
    let mut first_part = 1;
    for (col, &p) in columns(spec)?.iter().zip(&spec.parts_per_object) {
        let avail_w = col.x1 - col.x0;
        let a = rng.uniform(0.75, 1.0) * avail_w as f64 / 2.0;
        let b = rng.uniform(0.75, 1.0) * avail_h as f64 / 2.0;
        let cx = col.x0 as f64 + avail_w as f64 / 2.0;
        let cy = MARGIN as f64 + avail_h as f64 / 2.0;
        for y in MARGIN..MARGIN + avail_h {
            for x in col.x0..col.x1 {
                let dx = (x as f64 + 0.5 - cx) / a;
                let dy = (y as f64 + 0.5 - cy) / b;
                let r = (dx * dx + dy * dy).sqrt();
                if r < 1.0 {
                    let ring = ((r * p as f64) as usize).min(p - 1);
                    labels[y * spec.width + x] = (first_part + p - 1 - ring) as u16;
                }
            }
        }
        first_part += p;
    }
    Ok(())
}

/// Hue spread by the golden ratio; part 0 is a dark grey.
fn part_colour(part: usize) -> [f64; 3] {
    if part == 0 {
        return [0.2, 0.2, 0.2];
    }
    let h = (part as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let (s, v) = (0.7, 0.9);
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn render(parts: &LabelMap, rng: &mut XorShift64Star) -> Tensor {
    let n = parts.len();
    let mut data = vec![0.0; 3 * n];
    for (p, &l) in parts.labels().iter().enumerate() {
        let base = part_colour(l as usize);
        for c in 0..3 {
            data[c * n + p] = (base[c] + rng.uniform(-NOISE, NOISE)).clamp(0.0, 1.0);
        }
    }
    Tensor::new(3, parts.height(), parts.width(), data).expect("rgb shape")
}

/// Builds one scene from `spec`; identical specs give identical scenes.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mapping = spec.mapping()?;
    let mut rng = XorShift64Star::new(spec.seed);
    let mut labels = vec![0u16; spec.width * spec.height];
    match spec.layout {
        Layout::StackedRects => stacked(spec, &mut labels, &mut rng)?,
        Layout::NestedBlobs => nested(spec, &mut labels, &mut rng)?,
    }
    let parts = LabelMap::new(spec.width, spec.height, spec.num_parts(), labels)?;
    let mut counts = vec![0usize; spec.num_parts()];
    for &l in parts.labels() {
        counts[l as usize] += 1;
    }
    if let Some((part, &n)) = counts
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, &n)| n < spec.min_instance)
    {
        return Err(Error::Sizing(format!(
            "part {part} covers {n} pixels, fewer than the required {}",
            spec.min_instance
        )));
    }
    let objects = project_labels(&parts, &mapping)?;
    let rgb = render(&parts, &mut rng);
    Ok(Scene {
        parts,
        objects,
        mapping,
        rgb,
    })
}

/// `count` scenes, scene `i` drawn with seed `spec.seed + i`.
pub fn generate_many(spec: &SceneSpec, count: usize) -> Result<Vec<Scene>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate(&spec.with_seed(spec.seed.wrapping_add(i))))
        .collect()
}
