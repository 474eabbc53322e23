//! Procedural stand-in dataset: random streak volumes.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_4;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embed::{embed_volume, ToyEmbedderConfig};
use crate::error::{Error, Result};
use crate::model::{CaseId, Shape, Volume};

/// Blobs per axial slice, on average.
const BLOBS_PER_SLICE: usize = 6;
/// Degrees a blob's long axis may deviate from the diagonal.
const MAX_TILT: f64 = 15.0;
const MAX_ATTEMPTS: u64 = 16;

/// splitmix64 finalizer; decorrelates derived seeds.
pub(crate) fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable 64-bit FNV-1a; used to derive per-case seeds from ids.
pub(crate) fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

struct Blob {
    center: [f64; 3],
    /// 1 / 2σ² along z, along `dir`, across `dir`.
    inv_two_var: [f64; 3],
    /// In-plane unit direction of the long axis, (y, x).
    dir: [f64; 2],
    amplitude: f64,
}

/// Sparse bright streaks on a zero background, each a Gaussian about one
/// slice deep, long in-plane and thin across, oriented near the diagonal.
///
/// The zero background keeps the fill of a shift cheap, and the long axis
/// keeps a diagonal shift from destroying the pattern at once, so retrieval
/// degrades with translation strength instead of falling off a cliff.
fn blob_volume(case_id: CaseId, shape: Shape, seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nz, ny, nx) = shape;
    let extent = ny.min(nx) as f64;
    let blobs: Vec<Blob> = (0..BLOBS_PER_SLICE * nz)
        .map(|_| {
            let sigma = [
                rng.random_range(0.5..0.9),
                rng.random_range(0.3..0.5) * extent,
                rng.random_range(0.04..0.1) * extent,
            ];
            let theta = FRAC_PI_4 + rng.random_range(-MAX_TILT..=MAX_TILT).to_radians();
            Blob {
                center: [
                    rng.random_range(-0.5..nz as f64 - 0.5),
                    rng.random_range(0.0..ny as f64),
                    rng.random_range(0.0..nx as f64),
                ],
                inv_two_var: sigma.map(|s: f64| 1.0 / (2.0 * s * s)),
                dir: [theta.sin(), theta.cos()],
                amplitude: rng.random_range(0.3..1.0),
            }
        })
        .collect();
    Volume::from_fn(case_id, shape, |z, y, x| {
        let (z, y, x) = (z as f64, y as f64, x as f64);
        let v: f64 = blobs
            .iter()
            .map(|b| {
                let (dy, dx) = (y - b.center[1], x - b.center[2]);
                let along = dy * b.dir[0] + dx * b.dir[1];
                let across = dy * b.dir[1] - dx * b.dir[0];
                let e = (z - b.center[0]).powi(2) * b.inv_two_var[0]
                    + along * along * b.inv_two_var[1]
                    + across * across * b.inv_two_var[2];
                b.amplitude * (-e).exp()
            })
            .sum();
        v as f32
    })
    .expect("positive shape")
}

/// `n` seeded blob volumes named `{prefix}_{i:03}`.
///
/// Every slice embedding (toy embedder, default settings) is distinct from
/// every slice embedding of every other case; a case that collides is
/// regenerated from a derived seed.
pub fn generate_cases(prefix: &str, n: usize, shape: Shape, seed: u64) -> Result<Vec<Volume>> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 cases, got {n}")));
    }
    if shape.0 == 0 || shape.1 == 0 || shape.2 == 0 {
        return Err(Error::Config(format!("shape {shape:?} must be positive")));
    }
    let embedder = ToyEmbedderConfig::default();
    let make = |i: usize, attempt: u64| -> Result<(Volume, Vec<Vec<u32>>)> {
        let id = CaseId::new(format!("{prefix}_{i:03}"))?;
        let v = blob_volume(id, shape, mix(seed ^ mix(i as u64 ^ (attempt << 32))));
        let keys = embed_volume(&v, &embedder)?
            .vectors
            .iter()
            .map(|e| e.iter().map(|x| x.to_bits()).collect())
            .collect();
        Ok((v, keys))
    };
    let mut candidates: Vec<(Volume, Vec<Vec<u32>>)> =
        (0..n).into_par_iter().map(|i| make(i, 0)).collect::<Result<_>>()?;

    let mut owner: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut out = Vec::with_capacity(n);
    for (i, cand) in candidates.iter_mut().enumerate() {
        let mut attempt = 0;
        loop {
            let clash = cand.1.iter().any(|k| owner.get(k).is_some_and(|&o| o != i));
            if !clash {
                break;
            }
            attempt += 1;
            if attempt > MAX_ATTEMPTS {
                return Err(Error::Invariant(format!(
                    "could not generate distinct embeddings for case {i}"
                )));
            }
            *cand = make(i, attempt)?;
        }
        for k in &cand.1 {
            owner.insert(k.clone(), i);
        }
        out.push(cand.0.clone());
    }
    Ok(out)
}

pub fn generate_synthetic_dataset(n_cases: usize, shape: Shape, seed: u64) -> Result<Vec<Volume>> {
    generate_cases("case", n_cases, shape, seed)
}
