//! Brute-force and hand-computed references.

use partseg_core::metrics::{evaluate_maps, report};
use partseg_core::rng::XorShift64Star;
use partseg_core::{
    adjacency_from_labels, cross_entropy, one_hot, project_labels, reconstruction_loss,
    soft_adjacency, AdjacencyConfig, AdjacencyMethod, ConfusionMatrix, ElementShape, LabelMap,
    LabelSet, PartsToObjectsMapping, ProbMap, Weighting,
};

fn random_labels(w: usize, h: usize, c: usize, rng: &mut XorShift64Star) -> LabelMap {
    LabelMap::new(w, h, c, (0..w * h).map(|_| rng.below(c) as u16).collect()).unwrap()
}

/// Blocky maps so that parts form regions instead of salt-and-pepper.
fn blocky_labels(w: usize, h: usize, c: usize, rng: &mut XorShift64Star) -> LabelMap {
    let cell = rng.range_inclusive(1, 4);
    let (cw, ch) = (w.div_ceil(cell), h.div_ceil(cell));
    let coarse: Vec<u16> = (0..cw * ch).map(|_| rng.below(c) as u16).collect();
    let labels = (0..w * h)
        .map(|s| coarse[(s / w / cell) * cw + (s % w) / cell])
        .collect();
    LabelMap::new(w, h, c, labels).unwrap()
}

fn within(shape: ElementShape, r: usize, dx: isize, dy: isize) -> bool {
    let r = r as isize;
    match shape {
        ElementShape::Square => dx.abs() <= r && dy.abs() <= r,
        ElementShape::Diamond => dx.abs() + dy.abs() <= r,
    }
}

/// Pixel `s` lies in the dilation of part `p` when some pixel of `p` is within
/// the element radius of it.
fn covered(map: &LabelMap, p: u16, s: usize, shape: ElementShape, r: usize) -> bool {
    let w = map.width();
    let (sx, sy) = ((s % w) as isize, (s / w) as isize);
    map.labels()
        .iter()
        .enumerate()
        .any(|(q, &l)| l == p && within(shape, r, (q % w) as isize - sx, (q / w) as isize - sy))
}

fn brute_force(map: &LabelMap, cfg: &AdjacencyConfig) -> Vec<f64> {
    let n = map.num_classes();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j || (!cfg.include_background && (i == 0 || j == 0)) {
                continue;
            }
            let count = (0..map.len())
                .filter(|&s| match cfg.method {
                    AdjacencyMethod::DilateIntersect => {
                        let r = cfg.threshold.div_ceil(2);
                        covered(map, i as u16, s, cfg.shape, r)
                            && covered(map, j as u16, s, cfg.shape, r)
                    }
                    AdjacencyMethod::ExactDistance => {
                        map.labels()[s] as usize == i
                            && covered(map, j as u16, s, cfg.shape, cfg.threshold)
                    }
                })
                .count();
            out[i * n + j] = match cfg.weighting {
                Weighting::Weighted => count as f64,
                Weighting::Unweighted => count.min(1) as f64,
            };
        }
    }
    out
}

fn random_config(trial: usize, rng: &mut XorShift64Star) -> AdjacencyConfig {
    AdjacencyConfig {
        threshold: rng.range_inclusive(0, 5),
        shape: if trial.is_multiple_of(2) {
            ElementShape::Square
        } else {
            ElementShape::Diamond
        },
        method: if trial % 4 < 2 {
            AdjacencyMethod::DilateIntersect
        } else {
            AdjacencyMethod::ExactDistance
        },
        weighting: if trial.is_multiple_of(3) {
            Weighting::Unweighted
        } else {
            Weighting::Weighted
        },
        include_background: !trial.is_multiple_of(5),
        ..AdjacencyConfig::default()
    }
}

#[test]
fn adjacency_matches_brute_force() {
    let mut rng = XorShift64Star::new(21);
    for trial in 0..60usize {
        let (w, h, c) = (
            rng.range_inclusive(1, 12),
            rng.range_inclusive(1, 12),
            rng.range_inclusive(1, 6),
        );
        let map = if trial.is_multiple_of(2) {
            blocky_labels(w, h, c, &mut rng)
        } else {
            random_labels(w, h, c, &mut rng)
        };
        let cfg = random_config(trial, &mut rng);
        let fast = adjacency_from_labels(&map, c, &cfg).unwrap();
        assert_eq!(
            fast.entries(),
            brute_force(&map, &cfg).as_slice(),
            "trial {trial} {cfg:?}"
        );
    }
}

#[test]
fn soft_path_on_one_hot_is_exact() {
    let mut rng = XorShift64Star::new(22);
    for trial in 0..60 {
        let (w, h, c) = (
            rng.range_inclusive(1, 12),
            rng.range_inclusive(1, 12),
            rng.range_inclusive(1, 6),
        );
        let map = blocky_labels(w, h, c, &mut rng);
        let cfg = random_config(trial, &mut rng);
        let discrete = adjacency_from_labels(&map, c, &cfg).unwrap();
        let (raw, _) = soft_adjacency(&one_hot(&map, c).unwrap(), &cfg).unwrap();
        assert_eq!(raw.entries(), discrete.entries(), "trial {trial}");
    }
}

#[test]
fn dilate_intersect_is_symmetric() {
    let mut rng = XorShift64Star::new(23);
    for _ in 0..30 {
        let map = blocky_labels(10, 9, 5, &mut rng);
        let m = adjacency_from_labels(&map, 5, &AdjacencyConfig::default()).unwrap();
        assert!(m.is_symmetric());
        assert!((0..5).all(|i| m.get(i, i) == 0.0));
    }
}

fn labels(boundaries: Vec<usize>) -> LabelSet {
    LabelSet::new(PartsToObjectsMapping::new(boundaries).unwrap(), true).unwrap()
}

#[test]
fn four_pixel_example() {
    let gt = LabelMap::new(2, 2, 2, vec![0, 0, 1, 1]).unwrap();
    let pred = LabelMap::new(2, 2, 2, vec![0, 1, 1, 1]).unwrap();
    let r = evaluate_maps(&[(gt, pred)], &labels(vec![0, 1, 2])).unwrap();
    assert_eq!(r.miou, Some(7.0 / 12.0));
    assert_eq!(r.mpa, Some(0.75));
}

#[test]
fn perfect_prediction_scores_one() {
    let mut rng = XorShift64Star::new(24);
    let gt = random_labels(7, 5, 4, &mut rng);
    let r = evaluate_maps(&[(gt.clone(), gt)], &labels(vec![0, 1, 3, 4])).unwrap();
    for v in r
        .per_class_iou
        .iter()
        .chain(&r.per_class_pa)
        .chain(&r.per_object_miou)
        .flatten()
    {
        assert_eq!(*v, 1.0);
    }
    for v in [
        r.miou,
        r.miou_with_background,
        r.miou_without_background,
        r.mpa,
        r.mca,
        r.object_avg,
    ] {
        assert_eq!(v, Some(1.0));
    }
}

#[test]
fn accumulation_equals_concatenation() {
    let mut rng = XorShift64Star::new(25);
    let set = labels(vec![0, 1, 3, 5]);
    let pairs: Vec<(LabelMap, LabelMap)> = (0..10)
        .map(|_| {
            let (w, h) = (rng.range_inclusive(1, 9), rng.range_inclusive(1, 9));
            (
                random_labels(w, h, 5, &mut rng),
                random_labels(w, h, 5, &mut rng),
            )
        })
        .collect();
    let accumulated = evaluate_maps(&pairs, &set).unwrap();

    let gt: Vec<u16> = pairs
        .iter()
        .flat_map(|(g, _)| g.labels().to_vec())
        .collect();
    let pred: Vec<u16> = pairs
        .iter()
        .flat_map(|(_, p)| p.labels().to_vec())
        .collect();
    let n = gt.len();
    let cm = ConfusionMatrix::from_maps(
        &LabelMap::new(n, 1, 5, gt).unwrap(),
        &LabelMap::new(n, 1, 5, pred).unwrap(),
    )
    .unwrap();
    assert_eq!(report(&cm, &set).unwrap(), accumulated);

    let mut merged = ConfusionMatrix::new(5);
    for (g, p) in &pairs {
        merged
            .merge(&ConfusionMatrix::from_maps(g, p).unwrap())
            .unwrap();
    }
    assert_eq!(merged, cm);
}

/// Swapping two parts of the same object changes the part loss only.
#[test]
fn misplaced_parts_within_object() {
    let mapping = PartsToObjectsMapping::new(vec![0, 1, 3]).unwrap();
    let gt = LabelMap::new(4, 1, 3, vec![0, 1, 2, 2]).unwrap();
    let swapped = LabelMap::new(4, 1, 3, vec![0, 2, 1, 1]).unwrap();
    let pred = one_hot(&swapped, 3).unwrap();
    let objects = project_labels(&gt, &mapping).unwrap();
    let (rec, _) = reconstruction_loss(&pred, &objects, &mapping).unwrap();
    let (ce, _) = cross_entropy(&pred, &gt).unwrap();
    assert_eq!(rec, 0.0);
    assert!(ce > 0.0);

    let wrong_object = ProbMap::new(
        4,
        1,
        3,
        [0., 1., 0., 1., 0., 0., 0., 0., 1., 0., 0., 1.].to_vec(),
    )
    .unwrap();
    let (rec, _) = reconstruction_loss(&wrong_object, &objects, &mapping).unwrap();
    assert!(rec > 0.0);
}
