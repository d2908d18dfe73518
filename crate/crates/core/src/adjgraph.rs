//! Weighted part-adjacency matrices and the graph-matching loss.
//!
//! Entry `(i, j)` of a raw matrix counts the pixels where parts `i` and `j`
//! come within the distance threshold `T` of each other. The normative
//! definition dilates both part masks by `ceil(T/2)` and counts the
//! intersection; the exact-distance variant counts pixels of part `i` lying
//! within distance `T` of part `j` and is kept for cross-checking. Rows are
//! then L2-normalised, and the loss is the Frobenius distance between the
//! ground-truth and predicted normalised matrices.
//!
//! The prediction-side path replaces each binary mask by its probability
//! channel and the binary dilation by [`soft_dilate`], which makes the loss
//! differentiable in the probabilities. On one-hot inputs with
//! [`DilationMode::HardMax`] it reproduces the discrete counts exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{
    dilate, soft_dilate, soft_dilate_backward, BinaryMask, DilationMode, ElementShape,
    StructuringElement,
};
use crate::segmap::{LabelMap, ProbMap};

/// Tolerance on the norm of a non-zero normalised row.
pub const ROW_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    RawCounts,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjacencyMatrix {
    size: usize,
    kind: MatrixKind,
    entries: Vec<f64>,
}

impl AdjacencyMatrix {
    /// Checks the zero diagonal, non-negativity and, for normalised matrices,
    /// that every row is zero or of unit norm.
    pub fn new(size: usize, entries: Vec<f64>, kind: MatrixKind) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::shape(
                "adjacency entries",
                size * size,
                entries.len(),
            ));
        }
        for i in 0..size {
            let row = &entries[i * size..(i + 1) * size];
            if row[i] != 0.0 {
                return Err(Error::Config(format!(
                    "adjacency diagonal ({i}, {i}) is {}",
                    row[i]
                )));
            }
            if let Some(v) = row.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::Config(format!(
                    "adjacency row {i} holds invalid entry {v}"
                )));
            }
            if kind == MatrixKind::Normalized {
                let n = l2(row);
                if n != 0.0 && (n - 1.0).abs() > ROW_NORM_TOLERANCE {
                    return Err(Error::Config(format!("normalised row {i} has norm {n}")));
                }
            }
        }
        Ok(Self {
            size,
            kind,
            entries,
        })
    }

    pub fn zeros(size: usize, kind: MatrixKind) -> Self {
        Self {
            size,
            kind,
            entries: vec![0.0; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.size.max(1))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

fn l2(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMethod {
    #[default]
    DilateIntersect,
    ExactDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Weighted,
    /// Every positive count becomes 1 (saturating `min(count, 1)` on the soft path).
    Unweighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjacencyConfig {
    /// Distance threshold `T` in pixels.
    #[serde(alias = "T")]
    pub threshold: usize,
    pub shape: ElementShape,
    pub method: AdjacencyMethod,
    pub weighting: Weighting,
    /// When false, every entry in row and column 0 (the background) is zero.
    pub include_background: bool,
    /// Dilation used on the probability path.
    pub dilation: DilationMode,
}

impl Default for AdjacencyConfig {
    fn default() -> Self {
        Self {
            threshold: 4,
            shape: ElementShape::Square,
            method: AdjacencyMethod::DilateIntersect,
            weighting: Weighting::Weighted,
            include_background: true,
            dilation: DilationMode::HardMax,
        }
    }
}

impl AdjacencyConfig {
    /// Element applied to each mask: radius `ceil(T/2)` for the intersection
    /// method, `T` for the exact-distance one.
    pub fn element(&self) -> StructuringElement {
        let radius = match self.method {
            AdjacencyMethod::DilateIntersect => self.threshold.div_ceil(2),
            AdjacencyMethod::ExactDistance => self.threshold,
        };
        StructuringElement {
            shape: self.shape,
            radius,
        }
    }

    fn pair_counts(&self, i: usize, j: usize) -> bool {
        i != j && (self.include_background || (i != 0 && j != 0))
    }
}

fn part_masks(map: &LabelMap, num_parts: usize) -> Vec<Option<BinaryMask>> {
    (0..num_parts)
        .map(|p| {
            let bits: Vec<bool> = map.labels().iter().map(|&l| l as usize == p).collect();
            bits.iter()
                .any(|&b| b)
                .then(|| BinaryMask::new(map.width(), map.height(), bits).expect("shape from map"))
        })
        .collect()
}

/// Raw adjacency counts of a discrete part map.
pub fn adjacency_from_labels(
    map: &LabelMap,
    num_parts: usize,
    cfg: &AdjacencyConfig,
) -> Result<AdjacencyMatrix> {
    if map.num_classes() != num_parts {
        return Err(Error::shape("part count", num_parts, map.num_classes()));
    }
    let elem = cfg.element();
    let masks = part_masks(map, num_parts);
    let mut counts = vec![0u64; num_parts * num_parts];
    match cfg.method {
        AdjacencyMethod::DilateIntersect => {
            let dilated: Vec<(usize, BinaryMask)> = masks
                .iter()
                .enumerate()
                .filter_map(|(p, m)| m.as_ref().map(|m| (p, dilate(m, elem))))
                .collect();
            let mut covering = Vec::with_capacity(dilated.len());
            for s in 0..map.len() {
                covering.clear();
                covering.extend(dilated.iter().filter(|(_, d)| d.bits()[s]).map(|(p, _)| *p));
                for (a, &i) in covering.iter().enumerate() {
                    for &j in &covering[a + 1..] {
                        counts[i * num_parts + j] += 1;
                        counts[j * num_parts + i] += 1;
                    }
                }
            }
        }
        AdjacencyMethod::ExactDistance => {
            for (j, mj) in masks.iter().enumerate() {
                let Some(mj) = mj else { continue };
                let reach = dilate(mj, elem);
                for (s, &l) in map.labels().iter().enumerate() {
                    let i = l as usize;
                    if i != j && reach.bits()[s] {
                        counts[i * num_parts + j] += 1;
                    }
                }
            }
        }
    }
    let entries = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let (i, j) = (k / num_parts, k % num_parts);
            if !cfg.pair_counts(i, j) {
                0.0
            } else {
                match cfg.weighting {
                    Weighting::Weighted => c as f64,
                    Weighting::Unweighted => c.min(1) as f64,
                }
            }
        })
        .collect();
    Ok(AdjacencyMatrix {
        size: num_parts,
        kind: MatrixKind::RawCounts,
        entries,
    })
}

/// Divides every non-zero row by its L2 norm; zero rows stay zero.
pub fn normalize_rows(m: &AdjacencyMatrix) -> AdjacencyMatrix {
    let n = m.size;
    let mut entries = m.entries.clone();
    for row in entries.chunks_exact_mut(n.max(1)) {
        let norm = l2(row);
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    AdjacencyMatrix {
        size: n,
        kind: MatrixKind::Normalized,
        entries,
    }
}

/// Normalised adjacency of a ground-truth part map.
pub fn gt_adjacency(
    map: &LabelMap,
    num_parts: usize,
    cfg: &AdjacencyConfig,
) -> Result<AdjacencyMatrix> {
    Ok(normalize_rows(&adjacency_from_labels(map, num_parts, cfg)?))
}

/// Intermediate planes of the soft path, kept for the backward pass.
struct SoftPath {
    /// Row-side planes: dilated channels (intersection) or raw channels (exact).
    rows: Vec<Vec<f64>>,
    /// Column-side planes: the dilated channels in both methods.
    cols: Vec<Vec<f64>>,
    /// Unweighted sums before the weighting is applied.
    sums: Vec<f64>,
}

fn soft_path(pred: &ProbMap, cfg: &AdjacencyConfig) -> Result<SoftPath> {
    let (w, h, n) = (pred.width(), pred.height(), pred.num_classes());
    let elem = cfg.element();
    let channels: Vec<Vec<f64>> = (0..n).map(|c| pred.channel(c)).collect();
    let cols = channels
        .iter()
        .map(|ch| soft_dilate(ch, w, h, elem, cfg.dilation))
        .collect::<Result<Vec<_>>>()?;
    let rows = match cfg.method {
        AdjacencyMethod::DilateIntersect => cols.clone(),
        AdjacencyMethod::ExactDistance => channels,
    };
    let mut sums = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if cfg.pair_counts(i, j) {
                sums[i * n + j] = rows[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            }
        }
    }
    Ok(SoftPath { rows, cols, sums })
}

fn weigh(sum: f64, weighting: Weighting) -> f64 {
    match weighting {
        Weighting::Weighted => sum,
        Weighting::Unweighted => sum.min(1.0),
    }
}

/// Raw and normalised adjacency of a probability map.
pub fn soft_adjacency(
    pred: &ProbMap,
    cfg: &AdjacencyConfig,
) -> Result<(AdjacencyMatrix, AdjacencyMatrix)> {
    let path = soft_path(pred, cfg)?;
    let raw = AdjacencyMatrix {
        size: pred.num_classes(),
        kind: MatrixKind::RawCounts,
        entries: path.sums.iter().map(|&s| weigh(s, cfg.weighting)).collect(),
    };
    let norm = normalize_rows(&raw);
    Ok((raw, norm))
}

fn check_pair(gt: &AdjacencyMatrix, pred: &AdjacencyMatrix) -> Result<()> {
    if gt.size != pred.size {
        return Err(Error::shape("adjacency size", gt.size, pred.size));
    }
    for m in [gt, pred] {
        if m.kind != MatrixKind::Normalized {
            return Err(Error::Config(
                "graph-matching loss needs normalised matrices".into(),
            ));
        }
    }
    Ok(())
}

/// Frobenius distance between two normalised adjacency matrices.
pub fn gm_loss(gt: &AdjacencyMatrix, pred: &AdjacencyMatrix) -> Result<f64> {
    check_pair(gt, pred)?;
    Ok(gt
        .entries
        .iter()
        .zip(&pred.entries)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Graph-matching loss of `pred` against `gt` and its gradient with respect
/// to every probability entry (channel-last, like `pred`). At zero loss the
/// gradient is defined as zero; rows that are entirely zero pass no gradient
/// through the normalisation.
pub fn gm_loss_grad(
    pred: &ProbMap,
    gt: &AdjacencyMatrix,
    cfg: &AdjacencyConfig,
) -> Result<(f64, Vec<f64>)> {
    let n = pred.num_classes();
    if gt.kind != MatrixKind::Normalized {
        return Err(Error::Config(
            "ground-truth adjacency must be normalised".into(),
        ));
    }
    if gt.size != n {
        return Err(Error::shape("adjacency size", n, gt.size));
    }
    let path = soft_path(pred, cfg)?;
    let weighted: Vec<f64> = path.sums.iter().map(|&s| weigh(s, cfg.weighting)).collect();
    let raw = AdjacencyMatrix {
        size: n,
        kind: MatrixKind::RawCounts,
        entries: weighted,
    };
    let norm = normalize_rows(&raw);
    let loss = gm_loss(gt, &norm)?;
    let mut grad = vec![0.0; pred.probs().len()];
    if loss == 0.0 {
        return Ok((loss, grad));
    }

    // d loss / d normalised entries, then through the row normalisation.
    let mut d_raw = vec![0.0; n * n];
    for i in 0..n {
        let r = raw.row(i);
        let rn = l2(r);
        if rn == 0.0 {
            continue;
        }
        let nrow = norm.row(i);
        let g: Vec<f64> = (0..n).map(|j| (nrow[j] - gt.get(i, j)) / loss).collect();
        let dot: f64 = g.iter().zip(nrow).map(|(a, b)| a * b).sum();
        for j in 0..n {
            let s = path.sums[i * n + j];
            let dw = match cfg.weighting {
                Weighting::Weighted => 1.0,
                Weighting::Unweighted => (s < 1.0) as u8 as f64,
            };
            if cfg.pair_counts(i, j) {
                d_raw[i * n + j] = (g[j] - nrow[j] * dot) / rn * dw;
            }
        }
    }

    // sums[i][j] = <rows[i], cols[j]>
    let (w, h) = (pred.width(), pred.height());
    let npx = w * h;
    let mut d_rows = vec![vec![0.0; npx]; n];
    let mut d_cols = vec![vec![0.0; npx]; n];
    for i in 0..n {
        for j in 0..n {
            let d = d_raw[i * n + j];
            if d == 0.0 {
                continue;
            }
            for s in 0..npx {
                d_rows[i][s] += d * path.cols[j][s];
                d_cols[j][s] += d * path.rows[i][s];
            }
        }
    }
    let elem = cfg.element();
    for c in 0..n {
        let channel = pred.channel(c);
        let mut d_cols_total = d_cols[c].clone();
        let direct = match cfg.method {
            AdjacencyMethod::DilateIntersect => {
                // rows and cols are the same dilated planes
                d_cols_total
                    .iter_mut()
                    .zip(&d_rows[c])
                    .for_each(|(a, b)| *a += b);
                None
            }
            AdjacencyMethod::ExactDistance => Some(&d_rows[c]),
        };
        let mut d_channel =
            soft_dilate_backward(&channel, w, h, elem, cfg.dilation, &d_cols_total)?;
        if let Some(direct) = direct {
            d_channel.iter_mut().zip(direct).for_each(|(a, b)| *a += b);
        }
        for (s, v) in d_channel.into_iter().enumerate() {
            grad[s * n + c] = v;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;
    use crate::segmap::{argmax_map, one_hot};

    fn lm(w: usize, h: usize, n: usize, l: &[u16]) -> LabelMap {
        LabelMap::new(w, h, n, l.to_vec()).unwrap()
    }

    /// Pixel s lies in the dilation of part p iff some pixel q of p has q - s
    /// inside the element.
    fn brute_intersect(map: &LabelMap, n: usize, elem: StructuringElement) -> Vec<f64> {
        let (w, h) = (map.width() as isize, map.height() as isize);
        let mut out = vec![0.0; n * n];
        for sy in 0..h {
            for sx in 0..w {
                let mut covers = vec![false; n];
                for qy in 0..h {
                    for qx in 0..w {
                        if elem.contains(qx - sx, qy - sy) {
                            covers[map.get(qx as usize, qy as usize) as usize] = true;
                        }
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        if i != j && covers[i] && covers[j] {
                            out[i * n + j] += 1.0;
                        }
                    }
                }
            }
        }
        out
    }

    fn brute_exact(map: &LabelMap, n: usize, t: isize, shape: ElementShape) -> Vec<f64> {
        let (w, h) = (map.width() as isize, map.height() as isize);
        let mut out = vec![0.0; n * n];
        for sy in 0..h {
            for sx in 0..w {
                let i = map.get(sx as usize, sy as usize) as usize;
                let mut near = vec![false; n];
                for qy in 0..h {
                    for qx in 0..w {
                        let (dx, dy) = ((qx - sx).abs(), (qy - sy).abs());
                        let d = match shape {
                            ElementShape::Square => dx.max(dy),
                            ElementShape::Diamond => dx + dy,
                        };
                        if d <= t {
                            near[map.get(qx as usize, qy as usize) as usize] = true;
                        }
                    }
                }
                for j in 0..n {
                    if j != i && near[j] {
                        out[i * n + j] += 1.0;
                    }
                }
            }
        }
        out
    }

    fn random_map(w: usize, h: usize, n: usize, seed: u64) -> LabelMap {
        let mut r = XorShift64Star::new(seed);
        // blocky maps so that parts have interiors
        let cell: Vec<u16> = (0..16).map(|_| r.below(n) as u16).collect();
        let labels = (0..w * h)
            .map(|k| {
                let (x, y) = (k % w, k / w);
                if r.next_f64() < 0.1 {
                    r.below(n) as u16
                } else {
                    cell[(y * 4 / h) * 4 + x * 4 / w]
                }
            })
            .collect();
        LabelMap::new(w, h, n, labels).unwrap()
    }

    #[test]
    fn single_part_gives_zero_matrix() {
        let m = LabelMap::filled(5, 5, 3, 1).unwrap();
        for method in [
            AdjacencyMethod::DilateIntersect,
            AdjacencyMethod::ExactDistance,
        ] {
            let cfg = AdjacencyConfig {
                method,
                ..Default::default()
            };
            let a = adjacency_from_labels(&m, 3, &cfg).unwrap();
            assert!(a.entries().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn two_blocks_on_4x2_grid() {
        let m = lm(4, 2, 3, &[1, 1, 2, 2, 1, 1, 2, 2]);
        let cfg = AdjacencyConfig::default();
        let a = adjacency_from_labels(&m, 3, &cfg).unwrap();
        assert_eq!(a.get(1, 2), 8.0);
        assert_eq!(a.get(2, 1), 8.0);
        assert_eq!(
            a.entries(),
            brute_intersect(&m, 3, cfg.element()).as_slice()
        );
        let cfg = AdjacencyConfig {
            method: AdjacencyMethod::ExactDistance,
            ..Default::default()
        };
        let e = adjacency_from_labels(&m, 3, &cfg).unwrap();
        assert!(e.get(1, 2) > 0.0 && e.get(1, 2) == e.get(2, 1));
    }

    #[test]
    fn far_apart_parts_are_not_adjacent() {
        // parts at opposite corners of a 12x12 canvas, 10 pixels apart
        let mut l = vec![0u16; 144];
        l[0] = 1;
        l[143] = 2;
        let m = lm(12, 12, 3, &l);
        let cfg = AdjacencyConfig {
            method: AdjacencyMethod::ExactDistance,
            ..Default::default()
        };
        let a = adjacency_from_labels(&m, 3, &cfg).unwrap();
        assert_eq!(a.get(1, 2), 0.0);
        assert_eq!(a.get(2, 1), 0.0);
        assert!(a.get(1, 0) > 0.0);
    }

    #[test]
    fn agrees_with_brute_force() {
        for seed in 0..12 {
            let m = random_map(10, 9, 5, seed);
            for shape in [ElementShape::Square, ElementShape::Diamond] {
                for t in [0, 1, 3, 4] {
                    let cfg = AdjacencyConfig {
                        threshold: t,
                        shape,
                        ..Default::default()
                    };
                    let a = adjacency_from_labels(&m, 5, &cfg).unwrap();
                    assert_eq!(
                        a.entries(),
                        brute_intersect(&m, 5, cfg.element()).as_slice()
                    );
                    assert!(a.is_symmetric());
                    let cfg = AdjacencyConfig {
                        method: AdjacencyMethod::ExactDistance,
                        ..cfg
                    };
                    let a = adjacency_from_labels(&m, 5, &cfg).unwrap();
                    assert_eq!(
                        a.entries(),
                        brute_exact(&m, 5, t as isize, shape).as_slice()
                    );
                }
            }
        }
    }

    #[test]
    fn counts_grow_with_threshold() {
        for seed in 0..8 {
            let m = random_map(12, 12, 4, seed);
            for method in [
                AdjacencyMethod::DilateIntersect,
                AdjacencyMethod::ExactDistance,
            ] {
                let mut prev: Option<AdjacencyMatrix> = None;
                for t in 0..7 {
                    let cfg = AdjacencyConfig {
                        threshold: t,
                        method,
                        ..Default::default()
                    };
                    let a = adjacency_from_labels(&m, 4, &cfg).unwrap();
                    if let Some(p) = &prev {
                        assert!(a.entries().iter().zip(p.entries()).all(|(x, y)| x >= y));
                    }
                    prev = Some(a);
                }
            }
        }
    }

    #[test]
    fn unweighted_and_background_knobs() {
        let m = random_map(10, 10, 4, 3);
        let cfg = AdjacencyConfig {
            weighting: Weighting::Unweighted,
            include_background: false,
            ..Default::default()
        };
        let a = adjacency_from_labels(&m, 4, &cfg).unwrap();
        assert!(a.entries().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(a.row(0).iter().all(|&v| v == 0.0));
        assert!((0..4).all(|i| a.get(i, 0) == 0.0));
        let full = adjacency_from_labels(&m, 4, &AdjacencyConfig::default()).unwrap();
        for k in 0..16 {
            let (i, j) = (k / 4, k % 4);
            if i != 0 && j != 0 {
                assert_eq!(a.entries()[k], (full.entries()[k] > 0.0) as u8 as f64);
            }
        }
    }

    #[test]
    fn part_count_mismatch() {
        let m = lm(2, 1, 3, &[0, 1]);
        assert!(adjacency_from_labels(&m, 4, &AdjacencyConfig::default()).is_err());
    }

    #[test]
    fn normalisation_examples() {
        let m = AdjacencyMatrix::new(
            3,
            vec![0., 3., 4., 3., 0., 0., 4., 0., 0.],
            MatrixKind::RawCounts,
        )
        .unwrap();
        let n = normalize_rows(&m);
        assert_eq!(n.row(0), &[0.0, 0.6, 0.8]);
        assert_eq!(n.kind(), MatrixKind::Normalized);
        let z = normalize_rows(&AdjacencyMatrix::zeros(4, MatrixKind::RawCounts));
        assert!(z.entries().iter().all(|&v| v == 0.0));

        let mut r = XorShift64Star::new(5);
        for _ in 0..50 {
            let size = 1 + r.below(7);
            let e: Vec<f64> = (0..size * size)
                .map(|k| {
                    if k / size == k % size || r.next_f64() < 0.3 {
                        0.0
                    } else {
                        r.uniform(0.0, 1e4)
                    }
                })
                .collect();
            let n = normalize_rows(&AdjacencyMatrix::new(size, e, MatrixKind::RawCounts).unwrap());
            for row in n.rows() {
                let norm = l2(row);
                assert!(norm == 0.0 || (norm - 1.0).abs() < ROW_NORM_TOLERANCE);
            }
        }
    }

    #[test]
    fn matrix_invariants_enforced() {
        assert!(AdjacencyMatrix::new(2, vec![1.0, 0.0, 0.0, 0.0], MatrixKind::RawCounts).is_err());
        assert!(AdjacencyMatrix::new(2, vec![0.0, -1.0, 0.0, 0.0], MatrixKind::RawCounts).is_err());
        assert!(AdjacencyMatrix::new(2, vec![0.0, 0.5, 0.0, 0.0], MatrixKind::Normalized).is_err());
        assert!(AdjacencyMatrix::new(2, vec![0.0, 0.5, 0.0, 0.0], MatrixKind::RawCounts).is_ok());
    }

    #[test]
    fn gm_loss_examples() {
        let a = AdjacencyMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0], MatrixKind::Normalized).unwrap();
        let z = AdjacencyMatrix::zeros(2, MatrixKind::Normalized);
        assert_eq!(gm_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(gm_loss(&a, &z).unwrap(), 2f64.sqrt());
        assert!(gm_loss(&a, &AdjacencyMatrix::zeros(3, MatrixKind::Normalized)).is_err());
        assert!(gm_loss(&a, &AdjacencyMatrix::zeros(2, MatrixKind::RawCounts)).is_err());
    }

    #[test]
    fn gm_loss_is_a_metric() {
        let mut r = XorShift64Star::new(77);
        let rand_norm = |r: &mut XorShift64Star| {
            let e: Vec<f64> = (0..25)
                .map(|k| if k / 5 == k % 5 { 0.0 } else { r.next_f64() })
                .collect();
            normalize_rows(&AdjacencyMatrix::new(5, e, MatrixKind::RawCounts).unwrap())
        };
        for _ in 0..30 {
            let (a, b, c) = (rand_norm(&mut r), rand_norm(&mut r), rand_norm(&mut r));
            let ab = gm_loss(&a, &b).unwrap();
            assert_eq!(ab, gm_loss(&b, &a).unwrap());
            assert!(ab > 0.0);
            let flat: f64 = a
                .entries()
                .iter()
                .zip(b.entries())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((ab - flat).abs() < 1e-15);
            assert!(ab <= gm_loss(&a, &c).unwrap() + gm_loss(&c, &b).unwrap() + 1e-12);
        }
    }

    #[test]
    fn soft_path_on_one_hot_matches_discrete() {
        for seed in 0..10 {
            let m = random_map(9, 8, 4, seed);
            let p = one_hot(&m, 4).unwrap();
            for method in [
                AdjacencyMethod::DilateIntersect,
                AdjacencyMethod::ExactDistance,
            ] {
                for weighting in [Weighting::Weighted, Weighting::Unweighted] {
                    let cfg = AdjacencyConfig {
                        method,
                        weighting,
                        threshold: 3,
                        ..Default::default()
                    };
                    let (raw, norm) = soft_adjacency(&p, &cfg).unwrap();
                    let discrete = adjacency_from_labels(&argmax_map(&p), 4, &cfg).unwrap();
                    assert_eq!(raw.entries(), discrete.entries());
                    assert_eq!(norm, normalize_rows(&discrete));
                }
            }
        }
    }

    #[test]
    fn uniform_and_dominant_predictions() {
        let p = ProbMap::uniform(6, 5, 4).unwrap();
        let (raw, _) = soft_adjacency(&p, &AdjacencyConfig::default()).unwrap();
        assert!(raw.is_symmetric());
        let first = raw.get(0, 1);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(raw.get(i, j), first);
                }
            }
        }
        let dominant = one_hot(&LabelMap::filled(6, 5, 4, 2).unwrap(), 4).unwrap();
        let (raw, norm) = soft_adjacency(&dominant, &AdjacencyConfig::default()).unwrap();
        assert!(raw.entries().iter().all(|&v| v == 0.0));
        assert!(norm.entries().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_loss_means_zero_gradient() {
        let m = random_map(8, 8, 4, 1);
        let cfg = AdjacencyConfig::default();
        let gt = gt_adjacency(&m, 4, &cfg).unwrap();
        let (loss, grad) = gm_loss_grad(&one_hot(&m, 4).unwrap(), &gt, &cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
        let raw = adjacency_from_labels(&m, 4, &cfg).unwrap();
        assert!(gm_loss_grad(&one_hot(&m, 4).unwrap(), &raw, &cfg).is_err());
    }
}
