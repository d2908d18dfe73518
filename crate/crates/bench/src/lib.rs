//! Shared fixtures for the criterion benches.

use partseg_core::rng::XorShift64Star;
use partseg_core::synth::{generate, generate_many, SceneSpec};
use partseg_core::{LabelMap, ProbMap};

/// Stacked-rectangle scene of the given side with three two-part objects.
pub fn scene_labels(side: usize, seed: u64) -> LabelMap {
    let spec = SceneSpec {
        width: side,
        height: side,
        seed,
        ..SceneSpec::default()
    };
    generate(&spec).expect("bench scene").parts
}

/// Random per-pixel distributions over `classes` channels.
pub fn random_probs(side: usize, classes: usize, seed: u64) -> ProbMap {
    let mut rng = XorShift64Star::new(seed);
    let mut probs = Vec::with_capacity(side * side * classes);
    for _ in 0..side * side {
        let raw: Vec<f64> = (0..classes).map(|_| rng.uniform(0.05, 1.0)).collect();
        let sum: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|v| v / sum));
    }
    ProbMap::new(side, side, classes, probs).expect("bench probabilities")
}

pub fn training_scenes(count: usize) -> Vec<partseg_core::condnet::Sample> {
    generate_many(&SceneSpec::default(), count)
        .expect("bench scenes")
        .iter()
        .map(|s| s.to_sample().expect("bench sample"))
        .collect()
}
