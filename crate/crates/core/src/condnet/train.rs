use serde::{Deserialize, Serialize};

use super::net::{
    ordered_par_map, toy_backward, toy_forward, toy_forward_cached, ToyGrads, ToyNetConfig,
    ToyParams,
};
use super::tensor::Tensor;
use crate::adjgraph::{gt_adjacency, AdjacencyConfig, AdjacencyMatrix};
use crate::error::{Error, Result};
use crate::losses::{total_loss_with_graph, LossReport, LossWeights};
use crate::rng::XorShift64Star;
use crate::segmap::{LabelMap, PartsToObjectsMapping, ProbMap};

/// One training example: an image, its part and object labels, and the
/// object-level probabilities fed to the conditioning branch.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Tensor,
    pub parts: LabelMap,
    pub objects: LabelMap,
    pub object_probs: ProbMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Exponent of the polynomial learning-rate decay.
    pub poly_power: f64,
    /// Samples per step; `None` uses the whole set every step.
    pub batch_size: Option<usize>,
    pub weights: LossWeights,
    pub adjacency: AdjacencyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 0.5,
            poly_power: 0.9,
            batch_size: None,
            weights: LossWeights::default(),
            adjacency: AdjacencyConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.adjacency.dilation.validate()?;
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.lr
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        let frac = step as f64 / self.steps.max(1) as f64;
        self.lr * (1.0 - frac).max(0.0).powf(self.poly_power)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ToyParams,
    /// Mean loss over the step's batch, measured before that step's update.
    pub trace: Vec<LossReport>,
}

fn mean_report(reports: &[LossReport], w: &LossWeights) -> LossReport {
    let n = reports.len().max(1) as f64;
    let (ce, rec, gm) = reports.iter().fold((0.0, 0.0, 0.0), |a, r| {
        (a.0 + r.ce, a.1 + r.rec, a.2 + r.gm)
    });
    LossReport::new(ce / n, rec / n, gm / n, w)
}

fn check_sample(s: &Sample, net: &ToyNetConfig, mapping: &PartsToObjectsMapping) -> Result<()> {
    if s.parts.num_classes() != net.num_parts || mapping.num_parts() != net.num_parts {
        return Err(Error::shape(
            "part classes",
            net.num_parts,
            s.parts.num_classes(),
        ));
    }
    if mapping.num_objects() != net.num_objects {
        return Err(Error::shape(
            "object classes",
            net.num_objects,
            mapping.num_objects(),
        ));
    }
    s.parts.same_shape(&s.objects, "part vs object labels")?;
    s.parts
        .same_shape(&s.object_probs, "labels vs object probabilities")
}

struct Prepared<'a> {
    sample: &'a Sample,
    graph: AdjacencyMatrix,
}

fn prepare<'a>(
    data: &'a [Sample],
    net: &ToyNetConfig,
    mapping: &PartsToObjectsMapping,
    adj: &AdjacencyConfig,
) -> Result<Vec<Prepared<'a>>> {
    data.iter()
        .map(|s| {
            check_sample(s, net, mapping)?;
            Ok(Prepared {
                sample: s,
                graph: gt_adjacency(&s.parts, net.num_parts, adj)?,
            })
        })
        .collect()
}

fn sample_step(
    p: &Prepared,
    net: &ToyNetConfig,
    params: &ToyParams,
    mapping: &PartsToObjectsMapping,
    cfg: &TrainConfig,
) -> Result<(LossReport, ToyGrads)> {
    let s = p.sample;
    let cache = toy_forward_cached(&s.image, &s.object_probs, net, params)?;
    let (report, grad) = total_loss_with_graph(
        &cache.probs,
        &s.parts,
        &s.objects,
        mapping,
        &p.graph,
        &cfg.adjacency,
        &cfg.weights,
    )?;
    let (grads, _) = toy_backward(net, params, &cache, &grad)?;
    Ok((report, grads))
}

/// Gradient descent on the total loss, starting from `ToyParams::init(net)`.
/// The batch order is drawn from `net.seed`, so a run is reproducible.
pub fn train_toy(
    data: &[Sample],
    mapping: &PartsToObjectsMapping,
    net: &ToyNetConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_from(ToyParams::init(net)?, data, mapping, net, cfg)
}

pub fn train_from(
    mut params: ToyParams,
    data: &[Sample],
    mapping: &PartsToObjectsMapping,
    net: &ToyNetConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let prepared = prepare(data, net, mapping, &cfg.adjacency)?;
    let mut rng = XorShift64Star::new(net.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut cursor = order.len();
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<&Prepared> = match cfg.batch_size {
            None => prepared.iter().collect(),
            Some(b) => (0..b.min(prepared.len()))
                .map(|_| {
                    if cursor == order.len() {
                        shuffle(&mut order, &mut rng);
                        cursor = 0;
                    }
                    cursor += 1;
                    &prepared[order[cursor - 1]]
                })
                .collect(),
        };
        let results = ordered_par_map(&batch, |p| sample_step(p, net, &params, mapping, cfg));
        let mut reports = Vec::with_capacity(batch.len());
        let mut total = ToyGrads::zeros_like(&params);
        for r in results {
            let (report, g) = r?;
            reports.push(report);
            total.add_assign(&g);
        }
        let mean = mean_report(&reports, &cfg.weights);
        if !mean.is_finite() {
            return Err(Error::Diverged { step });
        }
        trace.push(mean);
        total.scale(1.0 / batch.len() as f64);
        params.sgd_step(&total, cfg.lr_at(step));
    }
    Ok(TrainOutcome { params, trace })
}

fn shuffle(v: &mut [usize], rng: &mut XorShift64Star) {
    for i in (1..v.len()).rev() {
        v.swap(i, rng.below(i + 1));
    }
}

/// Mean loss of `params` over `data`, without updating anything.
pub fn evaluate(
    data: &[Sample],
    mapping: &PartsToObjectsMapping,
    net: &ToyNetConfig,
    params: &ToyParams,
    adjacency: &AdjacencyConfig,
    weights: &LossWeights,
) -> Result<LossReport> {
    let prepared = prepare(data, net, mapping, adjacency)?;
    let reports = ordered_par_map(&prepared, |p| {
        let pred = toy_forward(&p.sample.image, &p.sample.object_probs, net, params)?;
        total_loss_with_graph(
            &pred,
            &p.sample.parts,
            &p.sample.objects,
            mapping,
            &p.graph,
            adjacency,
            weights,
        )
        .map(|(r, _)| r)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(mean_report(&reports, weights))
}

/// Predicted part probabilities for every sample.
pub fn predict(data: &[Sample], net: &ToyNetConfig, params: &ToyParams) -> Result<Vec<ProbMap>> {
    ordered_par_map(data, |s| {
        toy_forward(&s.image, &s.object_probs, net, params)
    })
    .into_iter()
    .collect()
}
