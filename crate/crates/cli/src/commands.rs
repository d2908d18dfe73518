use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use partseg_core::condnet::{evaluate, save_params, train_toy, Sample, ToyNetConfig, TrainConfig};
use partseg_core::io::{
    encode_map, load_map, load_probmap, save_map, save_ppm, save_probmap, MapFormat,
};
use partseg_core::metrics::{report, ConfusionMatrix, MetricsReport};
use partseg_core::synth::{generate_many, SceneSpec};
use partseg_core::{
    adjacency_from_labels, argmax_map, dilate, normalize_rows, one_hot, project_labels, total_loss,
    AdjacencyMatrix, BinaryMask, LabelMap, LabelSet, LossReport, MatrixKind, StructuringElement,
};
use serde::Serialize;

use crate::args::{
    DilateArgs, GraphArgs, GraphFormat, LossArgs, MetricsArgs, SynthArgs, TableFormat, TrainArgs,
};
use crate::config::{read_json, read_labelset, RunConfig};
use crate::error::{CliError, Result};

/// Writes `bytes` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(CliError::io(p)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(CliError::io("<stdout>"))
        }
    }
}

fn read_map(path: &Path) -> Result<LabelMap> {
    load_map(path).map_err(CliError::file(path))
}

fn labelset_path<'a>(flag: Option<&'a Path>, run: &'a RunConfig) -> Result<&'a Path> {
    flag.or(run.labelset.as_deref()).ok_or_else(|| {
        CliError::Usage("a label set is required (flag or run config `labelset`)".into())
    })
}

pub fn dilate_cmd(args: &DilateArgs) -> Result<()> {
    let map = read_map(&args.input)?;
    let bits = map.labels().iter().map(|&l| l != 0).collect();
    let mask = BinaryMask::new(map.width(), map.height(), bits)?;
    let elem = StructuringElement {
        shape: args.shape.into(),
        radius: args.radius,
    };
    let out = dilate(&mask, elem);
    let labels = out.bits().iter().map(|&b| u16::from(b)).collect();
    let result = LabelMap::new(map.width(), map.height(), 2, labels)?;
    match &args.out {
        Some(p) => save_map(&result, p).map_err(CliError::file(p)),
        None => emit(None, &encode_map(&result, MapFormat::PgmPlain)),
    }
}

/// Fixed nine significant digits; integers print without a fraction.
fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.fract() == 0.0 && v.abs() < 1e15 {
        return format!("{v:.0}");
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (8 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

#[derive(Serialize)]
struct MatrixDoc<'a> {
    size: usize,
    kind: MatrixKind,
    rows: Vec<&'a [f64]>,
}

pub fn graph_cmd(args: &GraphArgs, run: &RunConfig) -> Result<()> {
    let cfg = args.adjacency.apply(run.adjacency)?;
    let map = read_map(&args.input)?;
    let parts = args.parts.unwrap_or(map.num_classes());
    let map = map
        .with_num_classes(parts)
        .map_err(CliError::file(&args.input))?;
    let raw = adjacency_from_labels(&map, parts, &cfg)?;
    let m: AdjacencyMatrix = if args.raw { raw } else { normalize_rows(&raw) };
    let text = match args.format {
        GraphFormat::Csv => {
            let mut s = String::new();
            for row in m.rows() {
                let cells: Vec<String> = row.iter().map(|&v| fmt_sig9(v)).collect();
                writeln!(s, "{}", cells.join(",")).unwrap();
            }
            s
        }
        GraphFormat::Json => {
            let doc = MatrixDoc {
                size: m.size(),
                kind: m.kind(),
                rows: m.rows().collect(),
            };
            serde_json::to_string_pretty(&doc).expect("matrix serializes") + "\n"
        }
    };
    emit(args.out.as_deref(), text.as_bytes())
}

pub fn loss_cmd(args: &LossArgs, run: &RunConfig) -> Result<()> {
    let cfg = args.adjacency.apply(run.adjacency)?;
    let weights = args.weights.apply(run.weights)?;
    let labels = read_labelset(labelset_path(args.mapping.as_deref(), run)?)?;
    let pred = load_probmap(&args.pred).map_err(CliError::file(&args.pred))?;
    let gt = read_map(&args.gt)?
        .with_num_classes(labels.num_parts())
        .map_err(CliError::file(&args.gt))?;
    let objects = project_labels(&gt, &labels.mapping)?;
    let (r, _) = total_loss(&pred, &gt, &objects, &labels.mapping, &cfg, &weights)?;
    if !r.is_finite() {
        return Err(CliError::NonFinite(format!("loss: {r:?}")));
    }
    let text = if args.json {
        serde_json::to_string_pretty(&r).expect("report serializes") + "\n"
    } else {
        format!(
            "ce {}\nrec {}\ngm {}\ntotal {}\n",
            r.ce, r.rec, r.gm, r.total
        )
    };
    emit(args.out.as_deref(), text.as_bytes())
}

fn list_maps(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        if matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("segmap" | "pgm")
        ) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Prediction next to ground truth `gt`: a label map with the same stem, or
/// a probability map that is reduced by argmax.
fn read_prediction(dir: &Path, gt: &Path, classes: usize) -> Result<LabelMap> {
    let stem = gt.file_stem().unwrap_or_default();
    for ext in ["segmap", "pgm"] {
        let p = dir.join(stem).with_extension(ext);
        if p.is_file() {
            return read_map(&p)?
                .with_num_classes(classes)
                .map_err(CliError::file(&p));
        }
    }
    let p = dir.join(stem).with_extension("probmap");
    if p.is_file() {
        return Ok(argmax_map(&load_probmap(&p).map_err(CliError::file(&p))?));
    }
    Err(CliError::Io {
        path: dir.join(stem),
        source: std::io::Error::new(
            std::io::ErrorKind::NotFound,
            "no prediction for this ground truth",
        ),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig9).unwrap_or_default()
}

fn metrics_csv(r: &MetricsReport, labels: &LabelSet) -> String {
    let mut s = String::from("row,name,iou,pa\n");
    let names = labels.mapping.part_names();
    for (i, (iou, pa)) in r.per_class_iou.iter().zip(&r.per_class_pa).enumerate() {
        let name = names.get(i).map(String::as_str).unwrap_or("");
        writeln!(s, "part:{i},{name},{},{}", opt(*iou), opt(*pa)).unwrap();
    }
    let onames = labels.mapping.object_names();
    for (j, v) in r.per_object_miou.iter().enumerate() {
        let name = onames.get(j).map(String::as_str).unwrap_or("");
        writeln!(s, "object:{j},{name},{},", opt(*v)).unwrap();
    }
    for (k, v) in [
        ("miou", r.miou),
        ("miou_with_background", r.miou_with_background),
        ("miou_without_background", r.miou_without_background),
        ("object_avg", r.object_avg),
    ] {
        writeln!(s, "{k},,{},", opt(v)).unwrap();
    }
    writeln!(s, "mpa,,,{}", opt(r.mpa)).unwrap();
    writeln!(s, "mca,,,{}", opt(r.mca)).unwrap();
    s
}

pub fn metrics_cmd(args: &MetricsArgs, run: &RunConfig) -> Result<()> {
    let labels = read_labelset(labelset_path(args.labelset.as_deref(), run)?)?;
    let n = labels.num_parts();
    let gts = list_maps(&args.gt_dir)?;
    if gts.is_empty() {
        return Err(CliError::Io {
            path: args.gt_dir.clone(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no .segmap or .pgm ground truth",
            ),
        });
    }
    let mut cm = ConfusionMatrix::new(n);
    for gt_path in &gts {
        let gt = read_map(gt_path)?
            .with_num_classes(n)
            .map_err(CliError::file(gt_path))?;
        let pred = read_prediction(&args.pred_dir, gt_path, n)?;
        cm.add(&gt, &pred).map_err(CliError::file(gt_path))?;
    }
    let r = report(&cm, &labels)?;
    let text = match args.format() {
        TableFormat::Json => serde_json::to_string_pretty(&r).expect("report serializes") + "\n",
        TableFormat::Csv => metrics_csv(&r, &labels),
    };
    emit(args.out.as_deref(), text.as_bytes())
}

#[derive(Serialize)]
struct TrainSummary {
    steps: usize,
    scenes: usize,
    initial: LossReport,
    last: LossReport,
    held_out: Option<LossReport>,
}

fn scene_samples(spec: &SceneSpec, count: usize) -> Result<Vec<Sample>> {
    Ok(generate_many(spec, count)?
        .iter()
        .map(|s| s.to_sample())
        .collect::<partseg_core::Result<_>>()?)
}

pub fn train_cmd(args: &TrainArgs, run: &RunConfig) -> Result<()> {
    let mut net: ToyNetConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => ToyNetConfig::default(),
    };
    if let Some(seed) = args.seed.or(run.seed) {
        net.seed = seed;
    }
    if let Some(c) = args.conditioning {
        net.conditioning = c.into();
    }
    let spec: SceneSpec = match &args.scene_spec {
        Some(p) => read_json(p)?,
        None => SceneSpec::default(),
    };
    if spec.num_parts() != net.num_parts || spec.num_objects + 1 != net.num_objects {
        return Err(CliError::Core(partseg_core::Error::Config(format!(
            "scenes have {} parts / {} objects but the network expects {} / {}",
            spec.num_parts(),
            spec.num_objects + 1,
            net.num_parts,
            net.num_objects
        ))));
    }
    let cfg = TrainConfig {
        steps: args.steps,
        lr: args.lr,
        batch_size: args.batch_size,
        weights: args.weights.apply(run.weights)?,
        adjacency: args.adjacency.apply(run.adjacency)?,
        ..TrainConfig::default()
    };
    let mapping = spec.mapping()?;
    let train = scene_samples(&spec, args.scenes)?;
    let outcome = train_toy(&train, &mapping, &net, &cfg)?;

    if let Some(path) = &args.trace {
        let mut s = String::from("step,ce,rec,gm,total\n");
        for (i, r) in outcome.trace.iter().enumerate() {
            writeln!(s, "{i},{},{},{},{}", r.ce, r.rec, r.gm, r.total).unwrap();
        }
        emit(Some(path), s.as_bytes())?;
    }
    if let Some(path) = &args.params_out {
        save_params(&outcome.params, path).map_err(CliError::file(path))?;
    }
    let held_out = if args.held_out > 0 {
        let held = scene_samples(
            &spec.with_seed(spec.seed.wrapping_add(HELD_OUT_SEED_OFFSET)),
            args.held_out,
        )?;
        Some(evaluate(
            &held,
            &mapping,
            &net,
            &outcome.params,
            &cfg.adjacency,
            &cfg.weights,
        )?)
    } else {
        None
    };
    let summary = TrainSummary {
        steps: cfg.steps,
        scenes: train.len(),
        initial: outcome.trace.first().copied().unwrap_or_default(),
        last: outcome.trace.last().copied().unwrap_or_default(),
        held_out,
    };
    emit(
        None,
        (serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n").as_bytes(),
    )
}

/// Held-out scenes start this far past the training seed.
pub const HELD_OUT_SEED_OFFSET: u64 = 1_000_000;

pub fn synth_cmd(args: &SynthArgs, run: &RunConfig) -> Result<()> {
    let mut spec: SceneSpec = match &args.spec {
        Some(p) => read_json(p)?,
        None => SceneSpec::default(),
    };
    if let Some(seed) = args.seed.or(run.seed) {
        spec.seed = seed;
    }
    spec.validate()?;
    std::fs::create_dir_all(&args.out_dir).map_err(CliError::io(&args.out_dir))?;
    let scenes = generate_many(&spec, args.count)?;
    for (i, scene) in scenes.iter().enumerate() {
        let base = args.out_dir.join(format!("scene_{i:04}"));
        let p = base.with_extension("segmap");
        save_map(&scene.parts, &p).map_err(CliError::file(&p))?;
        let p = base.with_extension("probmap");
        let objects = one_hot(&scene.objects, scene.mapping.num_objects())?;
        save_probmap(&objects, &p).map_err(CliError::file(&p))?;
        let p = base.with_extension("ppm");
        save_ppm(&scene.rgb, &p).map_err(CliError::file(&p))?;
    }
    let labels = LabelSet::new(spec.mapping()?, true)?;
    let p = args.out_dir.join("labelset.json");
    emit(Some(&p), (labels.to_json() + "\n").as_bytes())?;
    eprintln!(
        "wrote {} scenes to {}",
        scenes.len(),
        args.out_dir.display()
    );
    Ok(())
}
