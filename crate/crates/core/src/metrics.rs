//! Confusion-matrix based segmentation scores.
//!
//! A class with no ground-truth and no predicted pixels has an undefined IoU
//! and is left out of every mean; the per-class arrays report it as `None`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmap::{LabelMap, LabelSet, PartsToObjectsMapping};

/// `counts[gt * size + pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            counts: vec![0; size * size],
        }
    }

    pub fn from_maps(gt: &LabelMap, pred: &LabelMap) -> Result<Self> {
        let mut m = Self::new(gt.num_classes());
        m.add(gt, pred)?;
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.size + pred]
    }

    /// Accumulates one image pair.
    pub fn add(&mut self, gt: &LabelMap, pred: &LabelMap) -> Result<()> {
        gt.same_shape(pred, "prediction vs ground truth")?;
        for (what, map) in [("ground-truth classes", gt), ("predicted classes", pred)] {
            if map.num_classes() != self.size {
                return Err(Error::shape(what, self.size, map.num_classes()));
            }
        }
        for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
            self.counts[g as usize * self.size + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.size != self.size {
            return Err(Error::shape("confusion matrix", self.size, other.size));
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    pub fn gt_count(&self, c: usize) -> u64 {
        (0..self.size).map(|p| self.get(c, p)).sum()
    }

    pub fn pred_count(&self, c: usize) -> u64 {
        (0..self.size).map(|g| self.get(g, c)).sum()
    }

    /// `TP / (TP + FP + FN)`, `None` when the class is absent from both maps.
    pub fn iou(&self, c: usize) -> Option<f64> {
        self.iou_fraction(c).map(|(n, d)| n as f64 / d as f64)
    }

    fn iou_fraction(&self, c: usize) -> Option<(u64, u64)> {
        let tp = self.true_positives(c);
        let union = self.gt_count(c) + self.pred_count(c) - tp;
        (union > 0).then_some((tp, union))
    }

    /// Per-class recall `TP / (TP + FN)`, `None` when the class has no
    /// ground-truth pixels.
    pub fn pixel_accuracy(&self, c: usize) -> Option<f64> {
        self.accuracy_fraction(c).map(|(n, d)| n as f64 / d as f64)
    }

    fn accuracy_fraction(&self, c: usize) -> Option<(u64, u64)> {
        let n = self.gt_count(c);
        (n > 0).then(|| (self.true_positives(c), n))
    }

    /// Overall fraction of correctly labelled pixels.
    pub fn overall_accuracy(&self) -> Option<f64> {
        let total = self.total();
        let tp: u64 = (0..self.size).map(|c| self.true_positives(c)).sum();
        (total > 0).then(|| tp as f64 / total as f64)
    }

    pub fn mean_iou(&self, include_background: bool) -> Option<f64> {
        let start = usize::from(!include_background);
        exact_mean((start..self.size).filter_map(|c| self.iou_fraction(c)))
    }

    pub fn mean_class_accuracy(&self) -> Option<f64> {
        exact_mean((0..self.size).filter_map(|c| self.accuracy_fraction(c)))
    }
}

/// Mean of the fractions `n / d`, summed exactly and rounded once, so the
/// result does not depend on summation order.
fn exact_mean(fractions: impl Iterator<Item = (u64, u64)>) -> Option<f64> {
    let mut sum = BigRational::zero();
    let mut count = 0u64;
    for (n, d) in fractions {
        sum += BigRational::new(BigInt::from(n), BigInt::from(d));
        count += 1;
    }
    (count > 0).then(|| (sum / BigInt::from(count)).to_f64().expect("finite ratio"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_iou: Vec<Option<f64>>,
    pub per_class_pa: Vec<Option<f64>>,
    /// Mean IoU over every defined class.
    pub miou_with_background: Option<f64>,
    /// Mean IoU with class 0 left out.
    pub miou_without_background: Option<f64>,
    /// Whichever of the two the label set designates.
    pub miou: Option<f64>,
    /// Overall pixel accuracy.
    pub mpa: Option<f64>,
    /// Mean of the defined per-class accuracies.
    pub mca: Option<f64>,
    /// Mean part IoU within each object, background object included.
    pub per_object_miou: Vec<Option<f64>>,
    /// Mean of the defined per-object values; the background object only
    /// counts when the headline includes background.
    pub object_avg: Option<f64>,
}

/// Scores an accumulated part-level confusion matrix.
pub fn report(cm: &ConfusionMatrix, labels: &LabelSet) -> Result<MetricsReport> {
    let mapping: &PartsToObjectsMapping = &labels.mapping;
    if cm.size() != mapping.num_parts() {
        return Err(Error::shape(
            "confusion matrix vs label set",
            mapping.num_parts(),
            cm.size(),
        ));
    }
    if cm.total() == 0 {
        return Err(Error::Config("confusion matrix is empty".into()));
    }
    let per_class_iou: Vec<_> = (0..cm.size()).map(|c| cm.iou(c)).collect();
    let per_class_pa = (0..cm.size()).map(|c| cm.pixel_accuracy(c)).collect();
    let with_bg = cm.mean_iou(true);
    let without_bg = if labels.background_is_class_zero {
        cm.mean_iou(false)
    } else {
        with_bg
    };
    let per_object_miou: Vec<_> = (0..mapping.num_objects())
        .map(|j| exact_mean(mapping.parts_of(j).filter_map(|c| cm.iou_fraction(c))))
        .collect();
    let skip = usize::from(labels.background_is_class_zero && !labels.headline_includes_background);
    let defined: Vec<f64> = per_object_miou[skip..].iter().flatten().copied().collect();
    Ok(MetricsReport {
        per_class_iou,
        per_class_pa,
        miou_with_background: with_bg,
        miou_without_background: without_bg,
        miou: if labels.headline_includes_background {
            with_bg
        } else {
            without_bg
        },
        mpa: cm.overall_accuracy(),
        mca: cm.mean_class_accuracy(),
        per_object_miou,
        object_avg: (!defined.is_empty())
            .then(|| defined.iter().sum::<f64>() / defined.len() as f64),
    })
}

/// Scores a set of ground-truth / prediction pairs, accumulating one
/// confusion matrix across all of them.
pub fn evaluate_maps(pairs: &[(LabelMap, LabelMap)], labels: &LabelSet) -> Result<MetricsReport> {
    let mut cm = ConfusionMatrix::new(labels.num_parts());
    for (gt, pred) in pairs {
        cm.add(gt, pred)?;
    }
    report(&cm, labels)
}
