//! Binary and soft dilation with square (Chebyshev) or diamond (Manhattan)
//! structuring elements. Neighbourhoods are clipped at the image border; no
//! padding value ever takes part in a window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(
                "mask dimensions",
                "positive",
                format!("{width}x{height}"),
            ));
        }
        if bits.len() != width * height {
            return Err(Error::shape("mask bit count", width * height, bits.len()));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementShape {
    /// Chebyshev ball: `max(|dx|, |dy|) <= r`.
    #[default]
    Square,
    /// Manhattan ball: `|dx| + |dy| <= r`.
    Diamond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub shape: ElementShape,
    pub radius: usize,
}

impl StructuringElement {
    pub fn square(radius: usize) -> Self {
        Self {
            shape: ElementShape::Square,
            radius,
        }
    }

    pub fn diamond(radius: usize) -> Self {
        Self {
            shape: ElementShape::Diamond,
            radius,
        }
    }

    pub fn contains(&self, dx: isize, dy: isize) -> bool {
        let r = self.radius as isize;
        match self.shape {
            ElementShape::Square => dx.abs() <= r && dy.abs() <= r,
            ElementShape::Diamond => dx.abs() + dy.abs() <= r,
        }
    }

    /// Offsets `(dx, dy)` of the element in row-major order.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let r = self.radius as isize;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if self.contains(dx, dy) {
                    out.push((dx, dy));
                }
            }
        }
        out
    }
}

/// How a real-valued channel is dilated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DilationMode {
    #[default]
    /// Windowed maximum. The subgradient goes to the first maximum of the
    /// window in row-major order.
    HardMax,
    /// `(1/beta) * ln(sum(exp(beta * x)))` over the window, clamped to `[0, 1]`.
    SmoothMax { beta: f64 },
}

pub const DEFAULT_BETA: f64 = 20.0;

impl DilationMode {
    pub fn smooth() -> Self {
        DilationMode::SmoothMax { beta: DEFAULT_BETA }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DilationMode::SmoothMax { beta } if !(beta > 0.0 && beta.is_finite()) => Err(
                Error::Config(format!("smooth-max beta must be positive, got {beta}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Clipped window of `(x, y)` under `elem`, as flat indices in row-major order.
fn window(
    x: usize,
    y: usize,
    width: usize,
    height: usize,
    offsets: &[(isize, isize)],
    out: &mut Vec<usize>,
) {
    out.clear();
    for &(dx, dy) in offsets {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        if nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height {
            out.push(ny as usize * width + nx as usize);
        }
    }
}

/// Sets a pixel iff some input pixel inside the element centred on it is set.
pub fn dilate(mask: &BinaryMask, elem: StructuringElement) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    if elem.radius == 0 {
        return mask.clone();
    }
    let bits = match elem.shape {
        ElementShape::Square => dilate_square(&mask.bits, w, h, elem.radius),
        ElementShape::Diamond => {
            let offsets = elem.offsets();
            let mut bits = vec![false; w * h];
            bits.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
                let mut win = Vec::with_capacity(offsets.len());
                for (x, out) in row.iter_mut().enumerate() {
                    window(x, y, w, h, &offsets, &mut win);
                    *out = win.iter().any(|&i| mask.bits[i]);
                }
            });
            bits
        }
    };
    BinaryMask {
        width: w,
        height: h,
        bits,
    }
}

/// Separable square dilation: a horizontal pass then a vertical one, each
/// answered from prefix counts.
fn dilate_square(bits: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let mut horiz = vec![false; w * h];
    horiz.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let src = &bits[y * w..(y + 1) * w];
        let mut prefix = vec![0usize; w + 1];
        for x in 0..w {
            prefix[x + 1] = prefix[x] + src[x] as usize;
        }
        for (x, out) in row.iter_mut().enumerate() {
            let lo = x.saturating_sub(r);
            let hi = (x + r + 1).min(w);
            *out = prefix[hi] > prefix[lo];
        }
    });
    let mut out = vec![false; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let lo = y.saturating_sub(r);
        let hi = (y + r + 1).min(h);
        for (x, o) in row.iter_mut().enumerate() {
            *o = (lo..hi).any(|yy| horiz[yy * w + x]);
        }
    });
    out
}

fn check_plane(len: usize, width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || len != width * height {
        return Err(Error::shape("plane size", format!("{width}x{height}"), len));
    }
    Ok(())
}

fn smooth_window(values: &[f64], win: &[usize], beta: f64) -> f64 {
    let m = win
        .iter()
        .map(|&i| values[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = win.iter().map(|&i| (beta * (values[i] - m)).exp()).sum();
    m + s.ln() / beta
}

/// Dilates a real-valued plane (row-major, values nominally in `[0, 1]`).
pub fn soft_dilate(
    values: &[f64],
    width: usize,
    height: usize,
    elem: StructuringElement,
    mode: DilationMode,
) -> Result<Vec<f64>> {
    check_plane(values.len(), width, height)?;
    mode.validate()?;
    let offsets = elem.offsets();
    let mut out = vec![0.0; values.len()];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let mut win = Vec::with_capacity(offsets.len());
        for (x, o) in row.iter_mut().enumerate() {
            window(x, y, width, height, &offsets, &mut win);
            *o = match mode {
                DilationMode::HardMax => win
                    .iter()
                    .map(|&i| values[i])
                    .fold(f64::NEG_INFINITY, f64::max),
                DilationMode::SmoothMax { beta } => {
                    smooth_window(values, &win, beta).clamp(0.0, 1.0)
                }
            };
        }
    });
    Ok(out)
}

/// Pulls `grad_out` (gradient w.r.t. the dilated plane) back to the input plane.
pub fn soft_dilate_backward(
    values: &[f64],
    width: usize,
    height: usize,
    elem: StructuringElement,
    mode: DilationMode,
    grad_out: &[f64],
) -> Result<Vec<f64>> {
    check_plane(values.len(), width, height)?;
    check_plane(grad_out.len(), width, height)?;
    mode.validate()?;
    let offsets = elem.offsets();
    let mut grad = vec![0.0; values.len()];
    let mut win = Vec::with_capacity(offsets.len());
    // Scatter in fixed pixel order so repeated runs are bit-identical.
    for y in 0..height {
        for x in 0..width {
            let g = grad_out[y * width + x];
            if g == 0.0 {
                continue;
            }
            window(x, y, width, height, &offsets, &mut win);
            match mode {
                DilationMode::HardMax => {
                    let mut best = win[0];
                    for &i in &win[1..] {
                        if values[i] > values[best] {
                            best = i;
                        }
                    }
                    grad[best] += g;
                }
                DilationMode::SmoothMax { beta } => {
                    let lse = smooth_window(values, &win, beta);
                    if !(0.0..=1.0).contains(&lse) {
                        continue;
                    }
                    for &i in &win {
                        grad[i] += g * (beta * (values[i] - lse)).exp();
                    }
                }
            }
        }
    }
    Ok(grad)
}
