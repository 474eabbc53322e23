//! Near-duplicate synthesis: crop, rotate, translate, blur, JPEG and noise.
//!
//! All geometric and filtering operations act per axial slice except the
//! border crop, which trims z as well. Every zero-strength member of a family
//! is an exact identity.


use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageFormat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::minmax_scale;
use crate::error::{Error, Result};
use crate::model::{TransformKind, TransformTag, Volume};

/// Tolerance for snapping sample coordinates onto the grid.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub strength: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TransformSpec {
    pub fn new(kind: TransformKind, strength: f64) -> Self {
        TransformSpec {
            kind,
            strength,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn tag(&self) -> TransformTag {
        TransformTag {
            kind: self.kind,
            strength: self.strength,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.strength;
        let ok = s.is_finite()
            && match self.kind {
                TransformKind::Crop => (0.0..0.5).contains(&s),
                TransformKind::Rotate => true,
                TransformKind::Translate => (0.0..1.0).contains(&s),
                TransformKind::Blur | TransformKind::Noise => s >= 0.0,
                TransformKind::Jpeg => s > 0.0 && s <= 100.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTransform(format!(
                "strength {s} out of range for {}",
                self.kind
            )))
        }
    }

    /// The 6 × 4 grid of transform families and strengths, mildest first.
    pub fn default_grid(seed: u64) -> Vec<TransformSpec> {
        TransformKind::ALL
            .iter()
            .flat_map(|&kind| {
                kind.default_strengths()
                    .into_iter()
                    .map(move |s| TransformSpec::new(kind, s).with_seed(seed))
            })
            .collect()
    }
}

/// A transformed volume together with the tag describing how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub volume: Volume,
    pub tag: TransformTag,
}

pub fn apply(spec: &TransformSpec, v: &Volume) -> Result<Transformed> {
    spec.validate()?;
    let volume = match spec.kind {
        TransformKind::Crop => crop_border(v, spec.strength)?,
        TransformKind::Rotate => rotate_xy(v, spec.strength),
        TransformKind::Translate => translate_xy(v, spec.strength),
        TransformKind::Blur => gaussian_blur(v, spec.strength),
        TransformKind::Jpeg => jpeg_roundtrip(v, spec.strength)?,
        TransformKind::Noise => add_gaussian_noise(v, spec.strength, spec.seed),
    };
    Ok(Transformed {
        volume,
        tag: spec.tag(),
    })
}

fn floor_snapped(x: f64) -> usize {
    (x + GRID_EPS).floor().max(0.0) as usize
}

/// Voxels trimmed from each side of an axis of length `extent`.
pub fn crop_margin(extent: usize, fraction: f64) -> usize {
    floor_snapped(fraction / 2.0 * extent as f64)
}

/// Symmetric border crop removing `fraction` of each extent in total.
pub fn crop_border(v: &Volume, fraction: f64) -> Result<Volume> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::InvalidTransform(format!(
            "crop fraction {fraction} outside [0, 0.5)"
        )));
    }
    let (nz, ny, nx) = v.shape();
    let (mz, my, mx) = (crop_margin(nz, fraction), crop_margin(ny, fraction), crop_margin(nx, fraction));
    let out_shape = (
        nz.saturating_sub(2 * mz),
        ny.saturating_sub(2 * my),
        nx.saturating_sub(2 * mx),
    );
    if out_shape.0 == 0 || out_shape.1 == 0 || out_shape.2 == 0 {
        return Err(Error::DegenerateOutput(format!(
            "cropping {:?} by {fraction} leaves {out_shape:?}",
            v.shape()
        )));
    }
    Volume::from_fn(v.case_id().clone(), out_shape, |z, y, x| v.get(z + mz, y + my, x + mx))
}

fn map_slices(v: &Volume, f: impl Fn(&[f32], usize, usize) -> Vec<f32> + Sync) -> Volume {
    let (_, ny, nx) = v.shape();
    let voxels: Vec<f32> = (0..v.slice_count())
        .into_par_iter()
        .flat_map_iter(|z| f(v.slice(z).data, ny, nx))
        .collect();
    Volume::new(v.case_id().clone(), v.shape(), voxels).expect("slice map preserves shape")
}

fn snap(c: f64) -> f64 {
    let r = c.round();
    if (c - r).abs() < GRID_EPS {
        r
    } else {
        c
    }
}

/// Bilinear sample with zero outside the grid.
fn sample_bilinear(data: &[f32], ny: usize, nx: usize, sy: f64, sx: f64) -> f32 {
    let (sy, sx) = (snap(sy), snap(sx));
    if sy < 0.0 || sx < 0.0 || sy > (ny - 1) as f64 || sx > (nx - 1) as f64 {
        return 0.0;
    }
    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(ny - 1), (x0 + 1).min(nx - 1));
    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
    let at = |y: usize, x: usize| f64::from(data[y * nx + x]);
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
    let top = lerp(at(y0, x0), at(y0, x1), fx);
    let bottom = lerp(at(y1, x0), at(y1, x1), fx);
    lerp(top, bottom, fy) as f32
}

/// Rotates every axial slice counterclockwise (as displayed, rows pointing
/// down) about its center. Samples falling off the grid become 0.
pub fn rotate_xy(v: &Volume, degrees: f64) -> Volume {
    if degrees == 0.0 {
        return v.clone();
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    map_slices(v, |data, ny, nx| {
        let cy = (ny - 1) as f64 / 2.0;
        let cx = (nx - 1) as f64 / 2.0;
        let mut out = Vec::with_capacity(ny * nx);
        for y in 0..ny {
            for x in 0..nx {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                // Inverse rotation: where does output (y, x) come from.
                let sx = cx + dx * cos - dy * sin;
                let sy = cy + dx * sin + dy * cos;
                out.push(sample_bilinear(data, ny, nx, sy, sx));
            }
        }
        out
    })
}

/// Voxel shift for a translation fraction along an axis.
pub fn shift_amount(extent: usize, fraction: f64) -> usize {
    (fraction * extent as f64).round() as usize
}

/// Shifts every slice by `round(fraction × extent)` voxels towards +x and +y.
pub fn translate_xy(v: &Volume, fraction: f64) -> Volume {
    let (_, ny, nx) = v.shape();
    let (sy, sx) = (shift_amount(ny, fraction), shift_amount(nx, fraction));
    if sy == 0 && sx == 0 {
        return v.clone();
    }
    map_slices(v, |data, ny, nx| {
        let mut out = vec![0.0f32; ny * nx];
        for y in sy..ny {
            for x in sx..nx {
                out[y * nx + x] = data[(y - sy) * nx + (x - sx)];
            }
        }
        out
    })
}

/// Normalized 1D Gaussian weights for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// 1D convolution along one axis, written as the center value plus weighted
/// deviations so that constant runs come back bit-exact.
fn convolve_line(line: &[f64], kernel: &[f64], out: &mut [f64]) {
    let radius = (kernel.len() / 2) as i64;
    let n = line.len();
    for (i, slot) in out.iter_mut().enumerate() {
        let center = line[i];
        let mut acc = 0.0;
        for (k, w) in kernel.iter().enumerate() {
            let j = reflect(i as i64 + k as i64 - radius, n);
            acc += w * (line[j] - center);
        }
        *slot = center + acc;
    }
}

/// Separable 2D Gaussian blur per axial slice, reflect padding.
pub fn gaussian_blur(v: &Volume, sigma: f64) -> Volume {
    if sigma == 0.0 {
        return v.clone();
    }
    let kernel = gaussian_kernel(sigma);
    map_slices(v, |data, ny, nx| {
        let mut rows: Vec<f64> = data.iter().map(|&x| f64::from(x)).collect();
        let mut buf = vec![0.0; nx.max(ny)];
        for y in 0..ny {
            let line = &rows[y * nx..(y + 1) * nx];
            convolve_line(line, &kernel, &mut buf[..nx]);
            rows[y * nx..(y + 1) * nx].copy_from_slice(&buf[..nx]);
        }
        let mut col = vec![0.0; ny];
        for x in 0..nx {
            for y in 0..ny {
                col[y] = rows[y * nx + x];
            }
            convolve_line(&col, &kernel, &mut buf[..ny]);
            for y in 0..ny {
                rows[y * nx + x] = buf[y];
            }
        }
        rows.into_iter().map(|x| x as f32).collect()
    })
}

fn jpeg_slice(data: &[f32], ny: usize, nx: usize, quality: u8) -> Result<Vec<f32>> {
    let pixels: Vec<u8> = data
        .iter()
        .map(|&v| (f64::from(v) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let (w, h) = (
        u32::try_from(nx).map_err(|_| Error::Codec("slice too wide".into()))?,
        u32::try_from(ny).map_err(|_| Error::Codec("slice too tall".into()))?,
    );
    let mut encoded = Vec::new();
    JpegEncoder::new_with_quality(&mut encoded, quality)
        .encode(&pixels, w, h, ExtendedColorType::L8)
        .map_err(|e| Error::Codec(e.to_string()))?;
    let decoded = image::load_from_memory_with_format(&encoded, ImageFormat::Jpeg)
        .map_err(|e| Error::Codec(e.to_string()))?
        .into_luma8();
    if decoded.width() != w || decoded.height() != h {
        return Err(Error::Codec(format!(
            "decoded {}x{} but encoded {w}x{h}",
            decoded.width(),
            decoded.height()
        )));
    }
    Ok(decoded.into_raw().into_iter().map(|p| f32::from(p) / 255.0).collect())
}

/// Baseline JPEG encode/decode of each 8-bit rendered slice. The output lives
/// on the volume's min-max scaled [0, 1] range.
pub fn jpeg_roundtrip(v: &Volume, quality: f64) -> Result<Volume> {
    if !(quality > 0.0 && quality <= 100.0) {
        return Err(Error::InvalidTransform(format!(
            "jpeg quality {quality} outside (0, 100]"
        )));
    }
    let q = quality.round().clamp(1.0, 100.0) as u8;
    let scaled = minmax_scale(v);
    let (_, ny, nx) = scaled.shape();
    let slices: Vec<Vec<f32>> = (0..scaled.slice_count())
        .into_par_iter()
        .map(|z| jpeg_slice(scaled.slice(z).data, ny, nx, q))
        .collect::<Result<_>>()?;
    Volume::new(v.case_id().clone(), v.shape(), slices.concat())
}

/// Adds i.i.d. N(0, std²) noise from a ChaCha8 stream seeded with `seed`.
/// No clipping is applied.
pub fn add_gaussian_noise(v: &Volume, std: f64, seed: u64) -> Volume {
    if std == 0.0 {
        return v.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("std is finite and non-negative");
    let voxels = v
        .voxels()
        .iter()
        .map(|&x| (f64::from(x) + normal.sample(&mut rng)) as f32)
        .collect();
    Volume::new(v.case_id().clone(), v.shape(), voxels).expect("noise keeps values finite")
}
