//! Label maps, probability maps and the parts-to-objects projection.
//!
//! Indices are 0-based everywhere. Object `j` of a [`PartsToObjectsMapping`]
//! owns the half-open part range `boundaries[j]..boundaries[j + 1]`; the
//! 1-based "parts `l[j-1]+1 ..= l[j]`" form converts to this one by shifting
//! both the object and the part index down by one, and that translation
//! happens nowhere else. Background, when present, is part 0 and object 0.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the per-pixel channel sum of a [`ProbMap`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Discrete segmentation map: one class index per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    num_classes: usize,
    labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, num_classes: usize, labels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(
                "label map dimensions",
                "positive",
                format!("{width}x{height}"),
            ));
        }
        if labels.len() != width * height {
            return Err(Error::shape("label count", width * height, labels.len()));
        }
        if num_classes == 0 || num_classes > u16::MAX as usize + 1 {
            return Err(Error::Config(format!(
                "num_classes {num_classes} outside 1..=65536"
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l as usize >= num_classes) {
            return Err(Error::LabelOutOfRange {
                x: i % width,
                y: i / width,
                label: labels[i] as usize,
                num_classes,
            });
        }
        Ok(Self {
            width,
            height,
            num_classes,
            labels,
        })
    }

    /// A map filled with a single label.
    pub fn filled(width: usize, height: usize, num_classes: usize, label: u16) -> Result<Self> {
        Self::new(width, height, num_classes, vec![label; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    /// Same labels, different declared class count.
    pub fn with_num_classes(self, num_classes: usize) -> Result<Self> {
        Self::new(self.width, self.height, num_classes, self.labels)
    }

    pub(crate) fn same_shape<T: Shape>(&self, other: &T, what: &'static str) -> Result<()> {
        if self.width != other.width() || self.height != other.height() {
            return Err(Error::shape(
                what,
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width(), other.height()),
            ));
        }
        Ok(())
    }
}

/// Anything with a pixel grid.
pub trait Shape {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
}

impl Shape for LabelMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
}

impl Shape for ProbMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
}

/// Per-pixel class probabilities, row-major with the channel index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    num_classes: usize,
    probs: Vec<f64>,
}

impl ProbMap {
    /// Builds a probability map, checking that every pixel lies on the simplex.
    pub fn new(width: usize, height: usize, num_classes: usize, probs: Vec<f64>) -> Result<Self> {
        let map = Self::new_unchecked(width, height, num_classes, probs)?;
        for (i, px) in map.probs.chunks_exact(num_classes).enumerate() {
            if let Some(v) = px.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidProbabilities(format!(
                    "value {v} at pixel ({}, {}) outside [0, 1]",
                    i % width,
                    i / width
                )));
            }
            let sum: f64 = px.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::InvalidProbabilities(format!(
                    "channels at pixel ({}, {}) sum to {sum}",
                    i % width,
                    i / width
                )));
            }
        }
        Ok(map)
    }

    /// Checks only the shape. Perturbation-based gradient checks step off the
    /// simplex, so the losses accept any finite field built this way.
    pub fn new_unchecked(
        width: usize,
        height: usize,
        num_classes: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || num_classes == 0 {
            return Err(Error::shape(
                "probability map dimensions",
                "positive",
                format!("{width}x{height}x{num_classes}"),
            ));
        }
        if probs.len() != width * height * num_classes {
            return Err(Error::shape(
                "probability count",
                width * height * num_classes,
                probs.len(),
            ));
        }
        Ok(Self {
            width,
            height,
            num_classes,
            probs,
        })
    }

    /// Every pixel uniform over the classes.
    pub fn uniform(width: usize, height: usize, num_classes: usize) -> Result<Self> {
        Self::new_unchecked(
            width,
            height,
            num_classes,
            vec![1.0 / num_classes as f64; width * height * num_classes],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.probs[p * self.num_classes..(p + 1) * self.num_classes]
    }

    /// Copies one class out as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.probs
            .iter()
            .skip(c)
            .step_by(self.num_classes)
            .copied()
            .collect()
    }
}

/// Monotone boundary array assigning contiguous part ranges to objects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartsToObjectsMapping {
    boundaries: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    object_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    part_names: Vec<String>,
}

impl PartsToObjectsMapping {
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        Self::with_names(boundaries, Vec::new(), Vec::new())
    }

    pub fn with_names(
        boundaries: Vec<usize>,
        object_names: Vec<String>,
        part_names: Vec<String>,
    ) -> Result<Self> {
        let m = Self {
            boundaries,
            object_names,
            part_names,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let b = &self.boundaries;
        if b.len() < 2 {
            return Err(Error::Mapping(
                "need at least one object (two boundaries)".into(),
            ));
        }
        if b[0] != 0 {
            return Err(Error::Mapping(format!(
                "first boundary must be 0, got {}",
                b[0]
            )));
        }
        if let Some(w) = b.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Mapping(format!(
                "boundaries not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if !self.object_names.is_empty() && self.object_names.len() != self.num_objects() {
            return Err(Error::Mapping(format!(
                "{} object names for {} objects",
                self.object_names.len(),
                self.num_objects()
            )));
        }
        if !self.part_names.is_empty() && self.part_names.len() != self.num_parts() {
            return Err(Error::Mapping(format!(
                "{} part names for {} parts",
                self.part_names.len(),
                self.num_parts()
            )));
        }
        Ok(())
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn num_objects(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn num_parts(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn object_names(&self) -> &[String] {
        &self.object_names
    }

    pub fn part_names(&self) -> &[String] {
        &self.part_names
    }

    /// Part range owned by object `object`.
    pub fn parts_of(&self, object: usize) -> Range<usize> {
        self.boundaries[object]..self.boundaries[object + 1]
    }

    /// Object owning `part`; `part` must be below [`num_parts`](Self::num_parts).
    pub fn object_of(&self, part: usize) -> usize {
        debug_assert!(part < self.num_parts());
        self.boundaries.partition_point(|&b| b <= part) - 1
    }

    fn check_parts(&self, num_parts: usize) -> Result<()> {
        if num_parts != self.num_parts() {
            return Err(Error::Mapping(format!(
                "mapping covers {} parts but the map has {num_parts}",
                self.num_parts()
            )));
        }
        Ok(())
    }
}

/// Part/object label set as stored in label-set JSON files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub mapping: PartsToObjectsMapping,
    pub background_is_class_zero: bool,
    /// Whether the headline mIoU averages over the background class too.
    pub headline_includes_background: bool,
}

#[derive(Serialize, Deserialize)]
struct LabelSetDoc {
    num_parts: usize,
    num_objects: usize,
    boundaries: Vec<usize>,
    #[serde(default)]
    part_names: Vec<String>,
    #[serde(default)]
    object_names: Vec<String>,
    #[serde(default = "default_true")]
    background_is_class_zero: bool,
    #[serde(default = "default_true")]
    headline_includes_background: bool,
}

fn default_true() -> bool {
    true
}

impl LabelSet {
    pub fn new(mapping: PartsToObjectsMapping, background_is_class_zero: bool) -> Result<Self> {
        if background_is_class_zero && mapping.parts_of(0) != (0..1) {
            return Err(Error::Mapping(
                "background object 0 must contain exactly part 0".into(),
            ));
        }
        Ok(Self {
            mapping,
            background_is_class_zero,
            headline_includes_background: true,
        })
    }

    pub fn num_parts(&self) -> usize {
        self.mapping.num_parts()
    }

    pub fn num_objects(&self) -> usize {
        self.mapping.num_objects()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LabelSetDoc = serde_json::from_str(text)?;
        let mapping =
            PartsToObjectsMapping::with_names(doc.boundaries, doc.object_names, doc.part_names)?;
        if mapping.num_parts() != doc.num_parts || mapping.num_objects() != doc.num_objects {
            return Err(Error::Mapping(format!(
                "declared {} parts / {} objects but boundaries give {} / {}",
                doc.num_parts,
                doc.num_objects,
                mapping.num_parts(),
                mapping.num_objects()
            )));
        }
        let mut set = Self::new(mapping, doc.background_is_class_zero)?;
        set.headline_includes_background = doc.headline_includes_background;
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        let doc = LabelSetDoc {
            num_parts: self.num_parts(),
            num_objects: self.num_objects(),
            boundaries: self.mapping.boundaries.clone(),
            part_names: self.mapping.part_names.clone(),
            object_names: self.mapping.object_names.clone(),
            background_is_class_zero: self.background_is_class_zero,
            headline_includes_background: self.headline_includes_background,
        };
        serde_json::to_string_pretty(&doc).expect("label set serializes")
    }
}

/// One-hot encodes `map` over `num_classes` channels.
pub fn one_hot(map: &LabelMap, num_classes: usize) -> Result<ProbMap> {
    let mut probs = vec![0.0; map.len() * num_classes];
    for (p, &l) in map.labels.iter().enumerate() {
        let l = l as usize;
        if l >= num_classes {
            return Err(Error::LabelOutOfRange {
                x: p % map.width,
                y: p / map.width,
                label: l,
                num_classes,
            });
        }
        probs[p * num_classes + l] = 1.0;
    }
    ProbMap::new_unchecked(map.width, map.height, num_classes, probs)
}

/// Index of the largest channel per pixel; ties go to the lowest index.
pub fn argmax_map(probs: &ProbMap) -> LabelMap {
    let labels = probs
        .probs
        .chunks_exact(probs.num_classes)
        .map(|px| {
            let mut best = 0;
            for (c, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = c;
                }
            }
            best as u16
        })
        .collect();
    LabelMap {
        width: probs.width,
        height: probs.height,
        num_classes: probs.num_classes,
        labels,
    }
}

/// Replaces every part index by the object that owns it.
pub fn project_labels(parts: &LabelMap, mapping: &PartsToObjectsMapping) -> Result<LabelMap> {
    mapping.check_parts(parts.num_classes)?;
    // Lookup table: one entry per part.
    let table: Vec<u16> = (0..mapping.num_parts())
        .map(|p| mapping.object_of(p) as u16)
        .collect();
    let labels = parts.labels.iter().map(|&l| table[l as usize]).collect();
    Ok(LabelMap {
        width: parts.width,
        height: parts.height,
        num_classes: mapping.num_objects(),
        labels,
    })
}

/// Sums part probabilities within each object's range.
pub fn sum_probability(pred: &ProbMap, mapping: &PartsToObjectsMapping) -> Result<ProbMap> {
    mapping.check_parts(pred.num_classes)?;
    let n_obj = mapping.num_objects();
    let mut out = Vec::with_capacity(pred.num_pixels() * n_obj);
    for px in pred.probs.chunks_exact(pred.num_classes) {
        for j in 0..n_obj {
            out.push(px[mapping.parts_of(j)].iter().sum());
        }
    }
    ProbMap::new_unchecked(pred.width, pred.height, n_obj, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(w: usize, h: usize, n: usize, l: &[u16]) -> LabelMap {
        LabelMap::new(w, h, n, l.to_vec()).unwrap()
    }

    #[test]
    fn one_hot_small_cases() {
        let p = one_hot(&lm(1, 1, 2, &[0]), 2).unwrap();
        assert_eq!(p.probs(), &[1.0, 0.0]);
        let p = one_hot(&lm(2, 1, 3, &[0, 1]), 3).unwrap();
        assert_eq!(p.probs(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn one_hot_rejects_out_of_range_label() {
        let err = one_hot(&lm(2, 2, 4, &[0, 1, 3, 0]), 3).unwrap_err();
        match err {
            Error::LabelOutOfRange { x, y, label, .. } => assert_eq!((x, y, label), (0, 1, 3)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn argmax_prefers_lowest_on_tie() {
        let p = ProbMap::new(1, 1, 2, vec![0.2, 0.8]).unwrap();
        assert_eq!(argmax_map(&p).labels(), &[1]);
        let p = ProbMap::new(1, 1, 2, vec![0.5, 0.5]).unwrap();
        assert_eq!(argmax_map(&p).labels(), &[0]);
    }

    #[test]
    fn prob_map_validation() {
        assert!(ProbMap::new(1, 1, 2, vec![0.6, 0.6]).is_err());
        assert!(ProbMap::new(1, 1, 2, vec![-0.1, 1.1]).is_err());
        assert!(ProbMap::new(1, 1, 2, vec![0.3, 0.7 + 1e-7]).is_ok());
        assert!(ProbMap::new(2, 1, 2, vec![0.3, 0.7]).is_err());
    }

    #[test]
    fn projection_examples() {
        let m = PartsToObjectsMapping::new(vec![0, 1, 3]).unwrap();
        let o = project_labels(&lm(3, 1, 3, &[0, 1, 2]), &m).unwrap();
        assert_eq!(o.labels(), &[0, 1, 1]);
        assert_eq!(o.num_classes(), 2);

        let m = PartsToObjectsMapping::new(vec![0, 2]).unwrap();
        let o = project_labels(&lm(2, 1, 2, &[0, 1]), &m).unwrap();
        assert_eq!(o.labels(), &[0, 0]);

        assert!(project_labels(&lm(2, 1, 3, &[0, 1]), &m).is_err());
    }

    #[test]
    fn summed_probability_examples() {
        let m = PartsToObjectsMapping::new(vec![0, 2]).unwrap();
        let p = ProbMap::new(1, 1, 2, vec![0.3, 0.7]).unwrap();
        let s = sum_probability(&p, &m).unwrap();
        assert!((s.probs()[0] - 1.0).abs() < 1e-15);

        let m = PartsToObjectsMapping::new(vec![0, 1, 3]).unwrap();
        let p = ProbMap::new(1, 1, 3, vec![0.2, 0.3, 0.5]).unwrap();
        let s = sum_probability(&p, &m).unwrap();
        assert_eq!(s.probs()[0], 0.2);
        assert!((s.probs()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn mapping_validation() {
        assert!(PartsToObjectsMapping::new(vec![1, 2]).is_err());
        assert!(PartsToObjectsMapping::new(vec![0, 2, 2]).is_err());
        assert!(PartsToObjectsMapping::new(vec![0]).is_err());
        let m = PartsToObjectsMapping::new(vec![0, 1, 4, 6]).unwrap();
        assert_eq!(m.num_parts(), 6);
        assert_eq!(m.num_objects(), 3);
        let owners: Vec<usize> = (0..6).map(|p| m.object_of(p)).collect();
        assert_eq!(owners, vec![0, 1, 1, 1, 2, 2]);
    }

    #[test]
    fn label_set_json() {
        let text = r#"{"num_parts":3,"num_objects":2,"boundaries":[0,1,3],
            "part_names":["bg","head","body"],"object_names":["bg","cat"]}"#;
        let ls = LabelSet::from_json(text).unwrap();
        assert!(ls.background_is_class_zero);
        assert_eq!(ls.mapping.part_names()[1], "head");
        let again = LabelSet::from_json(&ls.to_json()).unwrap();
        assert_eq!(ls, again);

        let bad = r#"{"num_parts":4,"num_objects":2,"boundaries":[0,1,3]}"#;
        assert!(LabelSet::from_json(bad).is_err());
        let bad_bg = r#"{"num_parts":3,"num_objects":2,"boundaries":[0,2,3]}"#;
        assert!(LabelSet::from_json(bad_bg).is_err());
    }
}
