//! Deterministic toy slice embedder.
//!
//! Each axial slice is min-max scaled at volume level, resized to
//! `preprocess_side × preprocess_side` with corner-aligned bilinear
//! interpolation, area-averaged down to `target_side × target_side` and
//! flattened row-major. It mirrors the preprocessing a real feature extractor
//! sees without needing model weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EmbeddingSet, Image2d, Slice, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyEmbedderConfig {
    pub target_side: usize,
    pub preprocess_side: usize,
}

impl Default for ToyEmbedderConfig {
    fn default() -> Self {
        ToyEmbedderConfig {
            target_side: 16,
            preprocess_side: 224,
        }
    }
}

impl ToyEmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_side == 0 || self.preprocess_side == 0 {
            return Err(Error::Config("embedder sides must be positive".into()));
        }
        if self.target_side > self.preprocess_side {
            return Err(Error::Config(format!(
                "target_side {} exceeds preprocess_side {}",
                self.target_side, self.preprocess_side
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.target_side * self.target_side
    }
}

/// Volume-level min-max scaling to [0, 1]; a constant volume maps to zeros.
pub fn minmax_scale(volume: &Volume) -> Volume {
    let (lo, hi) = volume
        .voxels()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = f64::from(hi) - f64::from(lo);
    let voxels = if range > 0.0 {
        volume
            .voxels()
            .iter()
            .map(|&v| ((f64::from(v) - f64::from(lo)) / range) as f32)
            .collect()
    } else {
        vec![0.0; volume.voxels().len()]
    };
    Volume::new(volume.case_id().clone(), volume.shape(), voxels)
        .expect("scaling preserves shape and finiteness")
}

/// Source coordinate and interpolation weights for corner-aligned sampling.
fn sample_axis(out: usize, input: usize) -> Vec<(usize, usize, f64)> {
    (0..out)
        .map(|i| {
            if input == 1 || out == 1 {
                return (0, 0, 0.0);
            }
            let src = i as f64 * (input - 1) as f64 / (out - 1) as f64;
            let lo = (src.floor() as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

/// Bilinear resize with corner-aligned sampling to `side × side`.
pub fn resize_slice(slice: Slice<'_>, side: usize) -> Image2d {
    resize_to(slice, side, side)
}

pub fn resize_to(slice: Slice<'_>, rows: usize, cols: usize) -> Image2d {
    assert!(slice.rows > 0 && slice.cols > 0, "cannot resize an empty slice");
    let ys = sample_axis(rows, slice.rows);
    let xs = sample_axis(cols, slice.cols);
    let mut data = Vec::with_capacity(rows * cols);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = lerp(f64::from(slice.at(y0, x0)), f64::from(slice.at(y0, x1)), fx);
            let bottom = lerp(f64::from(slice.at(y1, x0)), f64::from(slice.at(y1, x1)), fx);
            data.push(lerp(top, bottom, fy) as f32);
        }
    }
    Image2d::new(rows, cols, data)
}

/// Area-average pooling of a square image down to `side × side`.
fn average_pool(img: &Image2d, side: usize) -> Vec<f32> {
    let bounds = |n: usize| -> Vec<(usize, usize)> {
        (0..side)
            .map(|i| {
                let lo = i * n / side;
                let hi = ((i + 1) * n / side).max(lo + 1);
                (lo, hi)
            })
            .collect()
    };
    let rb = bounds(img.rows);
    let cb = bounds(img.cols);
    let mut out = Vec::with_capacity(side * side);
    for &(r0, r1) in &rb {
        for &(c0, c1) in &cb {
            let mut sum = 0.0f64;
            for r in r0..r1 {
                for c in c0..c1 {
                    sum += f64::from(img.at(r, c));
                }
            }
            out.push((sum / ((r1 - r0) * (c1 - c0)) as f64) as f32);
        }
    }
    out
}

/// Embeds an already min-max scaled slice.
fn embed_scaled_slice(slice: Slice<'_>, cfg: &ToyEmbedderConfig) -> Vec<f32> {
    let resized = resize_slice(slice, cfg.preprocess_side);
    average_pool(&resized, cfg.target_side)
}

/// One vector of dimension `target_side²` per axial slice, in z order.
pub fn embed_volume(volume: &Volume, cfg: &ToyEmbedderConfig) -> Result<EmbeddingSet> {
    cfg.validate()?;
    let scaled = minmax_scale(volume);
    let vectors: Vec<Vec<f32>> = (0..scaled.slice_count())
        .into_par_iter()
        .map(|z| embed_scaled_slice(scaled.slice(z), cfg))
        .collect();
    EmbeddingSet::new(volume.case_id().clone(), cfg.dim(), vectors)
}
