//! Cross-entropy, parts-to-objects reconstruction and the weighted total.
//!
//! All terms are negative log-likelihoods averaged over pixels, and every
//! gradient is taken with respect to the probability entries (channel-last),
//! so the module does not care which network produced them.

use serde::{Deserialize, Serialize};

use crate::adjgraph::{gm_loss_grad, gt_adjacency, AdjacencyConfig};
use crate::error::{Error, Result};
use crate::segmap::{sum_probability, LabelMap, PartsToObjectsMapping, ProbMap};

/// Lower clamp applied to a probability before taking its log.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Weight of the reconstruction term.
    pub lambda1: f64,
    /// Weight of the graph-matching term.
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1e-3,
            lambda2: 1e-1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be non-negative, got {} / {}",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub ce: f64,
    pub rec: f64,
    pub gm: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(ce: f64, rec: f64, gm: f64, w: &LossWeights) -> Self {
        Self {
            ce,
            rec,
            gm,
            total: ce + w.lambda1 * rec + w.lambda2 * gm,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.ce.is_finite() && self.rec.is_finite() && self.gm.is_finite() && self.total.is_finite()
    }
}

/// Mean over pixels of `-ln max(pred[p][gt[p]], eps)` and its gradient.
pub fn cross_entropy(pred: &ProbMap, gt: &LabelMap) -> Result<(f64, Vec<f64>)> {
    gt.same_shape(pred, "prediction vs ground truth")?;
    let c = pred.num_classes();
    let npx = pred.num_pixels() as f64;
    let mut grad = vec![0.0; pred.probs().len()];
    let mut loss = 0.0;
    for (p, &l) in gt.labels().iter().enumerate() {
        let l = l as usize;
        if l >= c {
            return Err(Error::LabelOutOfRange {
                x: p % gt.width(),
                y: p / gt.width(),
                label: l,
                num_classes: c,
            });
        }
        let v = pred.probs()[p * c + l].max(LOG_EPSILON);
        loss -= v.ln();
        grad[p * c + l] = -1.0 / (npx * v);
    }
    Ok((loss / npx, grad))
}

/// Cross-entropy of the object-summed prediction against object labels. The
/// gradient of each object's summed probability is copied to all of its parts.
pub fn reconstruction_loss(
    pred: &ProbMap,
    gt_objects: &LabelMap,
    mapping: &PartsToObjectsMapping,
) -> Result<(f64, Vec<f64>)> {
    let summed = sum_probability(pred, mapping)?;
    let (loss, obj_grad) = cross_entropy(&summed, gt_objects)?;
    let (np, no) = (pred.num_classes(), mapping.num_objects());
    let mut grad = vec![0.0; pred.probs().len()];
    for p in 0..pred.num_pixels() {
        for j in 0..no {
            let g = obj_grad[p * no + j];
            if g != 0.0 {
                for part in mapping.parts_of(j) {
                    grad[p * np + part] = g;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// The weighted objective `ce + lambda1 * rec + lambda2 * gm` together with
/// its gradient. Graph matching compares `pred` with the normalised adjacency
/// of `gt_parts` under `cfg`.
pub fn total_loss(
    pred: &ProbMap,
    gt_parts: &LabelMap,
    gt_objects: &LabelMap,
    mapping: &PartsToObjectsMapping,
    cfg: &AdjacencyConfig,
    w: &LossWeights,
) -> Result<(LossReport, Vec<f64>)> {
    w.validate()?;
    let gt_graph = gt_adjacency(gt_parts, pred.num_classes(), cfg)
        .map_err(|e| e.in_component("graph matching"))?;
    total_loss_with_graph(pred, gt_parts, gt_objects, mapping, &gt_graph, cfg, w)
}

/// As [`total_loss`], with the ground-truth adjacency precomputed.
pub fn total_loss_with_graph(
    pred: &ProbMap,
    gt_parts: &LabelMap,
    gt_objects: &LabelMap,
    mapping: &PartsToObjectsMapping,
    gt_graph: &crate::adjgraph::AdjacencyMatrix,
    cfg: &AdjacencyConfig,
    w: &LossWeights,
) -> Result<(LossReport, Vec<f64>)> {
    let (ce, mut grad) =
        cross_entropy(pred, gt_parts).map_err(|e| e.in_component("cross-entropy"))?;
    let (rec, g_rec) = reconstruction_loss(pred, gt_objects, mapping)
        .map_err(|e| e.in_component("reconstruction"))?;
    let (gm, g_gm) =
        gm_loss_grad(pred, gt_graph, cfg).map_err(|e| e.in_component("graph matching"))?;
    for ((g, r), m) in grad.iter_mut().zip(&g_rec).zip(&g_gm) {
        *g += w.lambda1 * r + w.lambda2 * m;
    }
    Ok((LossReport::new(ce, rec, gm, w), grad))
}
