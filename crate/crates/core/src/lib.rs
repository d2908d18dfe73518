//! Part segmentation with part-adjacency graph matching.
//!
//! Label and probability maps live in [`segmap`], morphology in
//! [`morphology`], adjacency graphs and the graph-matching loss in
//! [`adjgraph`], the remaining loss terms in [`losses`], the object-conditioned
//! toy network in [`condnet`], evaluation in [`metrics`] and seeded scenes in
//! [`synth`].

pub mod adjgraph;
pub mod condnet;
mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod morphology;
pub mod rng;
pub mod segmap;
pub mod synth;

pub use adjgraph::{
    adjacency_from_labels, gm_loss, gm_loss_grad, gt_adjacency, normalize_rows, soft_adjacency,
    AdjacencyConfig, AdjacencyMatrix, AdjacencyMethod, MatrixKind, Weighting,
};
pub use error::{Error, Result};
pub use losses::{cross_entropy, reconstruction_loss, total_loss, LossReport, LossWeights};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use morphology::{
    dilate, soft_dilate, BinaryMask, DilationMode, ElementShape, StructuringElement,
};
pub use segmap::{
    argmax_map, one_hot, project_labels, sum_probability, LabelMap, LabelSet,
    PartsToObjectsMapping, ProbMap,
};
pub use synth::{Layout, Scene, SceneSpec};
