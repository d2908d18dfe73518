use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use partseg_core::{
    AdjacencyConfig, AdjacencyMethod, DilationMode, ElementShape, LabelSet, LossWeights, Weighting,
};
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Settings shared by every subcommand, loaded from `--run-config` and then
/// overridden by flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub adjacency: AdjacencyConfig,
    #[serde(flatten)]
    pub weights: LossWeights,
    pub labelset: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        read_json(path)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_labelset(path: &Path) -> Result<LabelSet> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    LabelSet::from_json(&text).map_err(CliError::file(path))
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    Square,
    Diamond,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    /// Intersection of the two parts dilated by ceil(T/2)
    Dilate,
    /// Pixels of one part within distance T of the other
    Exact,
}

impl From<ShapeArg> for ElementShape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::Square => ElementShape::Square,
            ShapeArg::Diamond => ElementShape::Diamond,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct AdjacencyFlags {
    /// Distance threshold in pixels
    #[arg(long = "T", value_name = "PIXELS")]
    pub threshold: Option<usize>,
    #[arg(long, value_enum)]
    pub shape: Option<ShapeArg>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Saturate every positive count to 1
    #[arg(long)]
    pub unweighted: bool,
    /// Zero the background row and column
    #[arg(long)]
    pub no_background: bool,
    /// Smooth-max dilation on probabilities, optionally with its beta
    #[arg(long, value_name = "BETA", num_args = 0..=1, default_missing_value = "20")]
    pub smooth: Option<f64>,
}

impl AdjacencyFlags {
    pub fn apply(&self, mut cfg: AdjacencyConfig) -> Result<AdjacencyConfig> {
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        if let Some(s) = self.shape {
            cfg.shape = s.into();
        }
        if let Some(m) = self.method {
            cfg.method = match m {
                MethodArg::Dilate => AdjacencyMethod::DilateIntersect,
                MethodArg::Exact => AdjacencyMethod::ExactDistance,
            };
        }
        if self.unweighted {
            cfg.weighting = Weighting::Unweighted;
        }
        if self.no_background {
            cfg.include_background = false;
        }
        if let Some(beta) = self.smooth {
            cfg.dilation = DilationMode::SmoothMax { beta };
        }
        cfg.dilation.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct WeightFlags {
    /// Weight of the reconstruction term
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Weight of the graph-matching term
    #[arg(long)]
    pub lambda2: Option<f64>,
}

impl WeightFlags {
    pub fn apply(&self, mut w: LossWeights) -> Result<LossWeights> {
        if let Some(v) = self.lambda1 {
            w.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            w.lambda2 = v;
        }
        w.validate()?;
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_json_with_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"T": 2, "method": "exact_distance", "lambda2": 0.5, "seed": 3}"#,
        )
        .unwrap();
        assert_eq!(cfg.adjacency.threshold, 2);
        assert_eq!(cfg.adjacency.method, AdjacencyMethod::ExactDistance);
        assert_eq!(cfg.weights.lambda1, 1e-3);
        assert_eq!(cfg.weights.lambda2, 0.5);
        assert_eq!(cfg.seed, Some(3));
        let cfg: RunConfig =
            serde_json::from_str(r#"{"dilation": {"mode": "smooth_max", "beta": 5}}"#).unwrap();
        assert_eq!(
            cfg.adjacency.dilation,
            DilationMode::SmoothMax { beta: 5.0 }
        );
    }

    #[test]
    fn flags_win() {
        let flags = AdjacencyFlags {
            threshold: Some(6),
            unweighted: true,
            smooth: Some(20.0),
            ..AdjacencyFlags::default()
        };
        let cfg = flags.apply(AdjacencyConfig::default()).unwrap();
        assert_eq!(cfg.threshold, 6);
        assert_eq!(cfg.weighting, Weighting::Unweighted);
        assert_eq!(cfg.dilation, DilationMode::smooth());
        let bad = AdjacencyFlags {
            smooth: Some(-1.0),
            ..AdjacencyFlags::default()
        };
        assert!(bad.apply(AdjacencyConfig::default()).is_err());
    }
}
