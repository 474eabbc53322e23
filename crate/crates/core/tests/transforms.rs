mod common;

use proptest::prelude::*;
use rand::Rng;
use voldup_core::embed::{embed_volume, ToyEmbedderConfig};
use voldup_core::transforms::{
    add_gaussian_noise, apply, crop_border, gaussian_blur, jpeg_roundtrip, rotate_xy, translate_xy, TransformSpec,
};
use voldup_core::{TransformKind, Volume};

use common::{case, psnr, rng};

fn random_volume(seed: u64, shape: (usize, usize, usize)) -> Volume {
    let mut r = rng(seed);
    Volume::from_fn(case("v"), shape, |_, _, _| r.random_range(0.0f32..1.0)).unwrap()
}

/// Smooth slices spanning exactly [0, 1].
fn smooth_volume(seed: u64, shape: (usize, usize, usize)) -> Volume {
    let mut r = rng(seed);
    let (a, b, c) = (r.random_range(0.05..0.2), r.random_range(0.05..0.2), r.random_range(0.0..6.0));
    let raw: Vec<f32> = (0..shape.0 * shape.1 * shape.2)
        .map(|i| {
            let (z, y, x) = (i / (shape.1 * shape.2), (i / shape.2) % shape.1, i % shape.2);
            ((a * y as f64 + c).sin() * (b * x as f64).cos() + 0.1 * z as f64) as f32
        })
        .collect();
    let (lo, hi) = raw.iter().fold((f32::MAX, f32::MIN), |(l, h), &x| (l.min(x), h.max(x)));
    Volume::new(case("smooth"), shape, raw.iter().map(|x| (x - lo) / (hi - lo)).collect()).unwrap()
}

#[test]
fn crop_examples() {
    let v = random_volume(1, (10, 10, 10));
    assert_eq!(crop_border(&v, 0.20).unwrap().shape(), (8, 8, 8));
    let thin = random_volume(2, (3, 3, 3));
    assert_eq!(crop_border(&thin, 0.4).unwrap(), thin);
    let cropped = crop_border(&v, 0.2).unwrap();
    assert_eq!(cropped.get(0, 0, 0), v.get(1, 1, 1));
    assert_eq!(cropped.get(7, 7, 7), v.get(8, 8, 8));
}

#[test]
fn rotate_half_turn_remaps_exactly() {
    let v = Volume::from_fn(case("r"), (1, 3, 3), |_, y, x| (y * 3 + x) as f32 + 1.0).unwrap();
    let r = rotate_xy(&v, 180.0);
    for y in 0..3 {
        for x in 0..3 {
            assert!((r.get(0, 2 - y, 2 - x) - v.get(0, y, x)).abs() < 1e-5);
        }
    }
}

#[test]
fn rotate_constant_keeps_interior() {
    let v = Volume::from_fn(case("c"), (1, 21, 21), |_, _, _| 0.7).unwrap();
    let r = rotate_xy(&v, 13.0);
    assert!((r.get(0, 10, 10) - 0.7).abs() < 1e-6);
    assert!(r.voxels().iter().all(|&x| x.abs() < 1e-6 || (x - 0.7).abs() < 1e-6 || (0.0..0.7).contains(&x)));
}

#[test]
fn translate_shifts_content() {
    let v = random_volume(3, (2, 20, 20));
    let t = translate_xy(&v, 0.05);
    for y in 0..19 {
        for x in 0..19 {
            assert_eq!(t.get(1, y + 1, x + 1), v.get(1, y, x));
        }
    }
    assert!((0..20).all(|i| t.get(0, 0, i) == 0.0 && t.get(0, i, 0) == 0.0));
}

#[test]
fn blur_impulse_center_weight() {
    let n = 41;
    let v = Volume::from_fn(case("i"), (1, n, n), |_, y, x| if y == 20 && x == 20 { 1.0 } else { 0.0 }).unwrap();
    for sigma in [1.0f64, 2.0] {
        let r = (3.0 * sigma).ceil() as i64;
        let mut total = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                total += (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
            }
        }
        let b = gaussian_blur(&v, sigma);
        assert!((b.get(0, 20, 20) as f64 - 1.0 / total).abs() < 1e-6, "sigma {sigma}");
        let mass: f64 = b.voxels().iter().map(|&x| x as f64).sum();
        assert!((mass - 1.0).abs() < 1e-5);
    }
}

#[test]
fn blur_keeps_constants() {
    let v = Volume::from_fn(case("c"), (2, 9, 13), |_, _, _| 0.3).unwrap();
    for s in [0.5, 1.0, 4.0, 8.0] {
        assert!(gaussian_blur(&v, s).voxels().iter().all(|&x| (x - 0.3).abs() < 1e-6));
    }
}

#[test]
fn jpeg_psnr_falls_with_quality() {
    let v = random_volume(4, (1, 32, 32));
    let p: Vec<f64> = [25.0, 50.0, 75.0, 100.0]
        .iter()
        .map(|&q| {
            let scaled = voldup_core::embed::minmax_scale(&v);
            psnr(scaled.voxels(), jpeg_roundtrip(&v, q).unwrap().voxels())
        })
        .collect();
    assert!(p.windows(2).all(|w| w[0] <= w[1]), "{p:?}");
}

#[test]
fn jpeg_q100_on_smooth_slices() {
    for seed in 0..8 {
        let v = smooth_volume(seed, (2, 40, 40));
        assert!(psnr(v.voxels(), jpeg_roundtrip(&v, 100.0).unwrap().voxels()) >= 40.0);
    }
}

#[test]
fn noise_statistics() {
    let v = Volume::from_fn(case("z"), (10, 100, 1000), |_, _, _| 0.5).unwrap();
    let std = 0.2;
    let out = add_gaussian_noise(&v, std, 7);
    let d: Vec<f64> = out.voxels().iter().map(|&x| x as f64 - 0.5).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
    assert!((var.sqrt() - std).abs() / std < 0.01);
    assert_eq!(add_gaussian_noise(&v, std, 7), out);
    assert_ne!(add_gaussian_noise(&v, std, 8), out);
}

#[test]
fn dispatch_matches_direct_calls() {
    let v = random_volume(5, (4, 16, 16));
    let t = apply(&TransformSpec::new(TransformKind::Crop, 0.05), &v).unwrap();
    assert_eq!(t.volume, crop_border(&v, 0.05).unwrap());
    assert_eq!(t.volume.case_id(), v.case_id());
    assert_eq!(t.tag.to_string(), "crop:0.05");
    let noise = TransformSpec::new(TransformKind::Noise, 0.1).with_seed(7);
    assert_eq!(apply(&noise, &v).unwrap(), apply(&noise, &v).unwrap());
    assert_eq!(apply(&TransformSpec::new(TransformKind::Rotate, 5.0), &v).unwrap().volume.shape(), v.shape());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shape_preserving_except_crop(seed in any::<u64>(), nz in 1usize..4, ny in 2usize..14, nx in 2usize..14, pick in 0usize..24) {
        let v = random_volume(seed, (nz, ny, nx));
        let spec = TransformSpec::default_grid(seed)[pick];
        let out = apply(&spec, &v).unwrap().volume;
        if spec.kind == TransformKind::Crop {
            prop_assert!(out.shape().0 <= nz && out.shape().1 <= ny && out.shape().2 <= nx);
        } else {
            prop_assert_eq!(out.shape(), v.shape());
        }
    }

    #[test]
    fn embedding_keeps_slice_count_and_is_deterministic(seed in any::<u64>(), nz in 1usize..6, ny in 1usize..20, nx in 1usize..20) {
        let v = random_volume(seed, (nz, ny, nx));
        let cfg = ToyEmbedderConfig { target_side: 8, preprocess_side: 32 };
        let a = embed_volume(&v, &cfg).unwrap();
        prop_assert_eq!(a.slice_count(), nz);
        prop_assert_eq!(a.dim, 64);
        prop_assert_eq!(embed_volume(&v, &cfg).unwrap(), a);
    }

    #[test]
    fn embedding_moves_at_most_epsilon(seed in any::<u64>(), eps in 0.0f32..0.05) {
        // Embeds data already spanning [0, 1] so scaling leaves it untouched;
        // the perturbation keeps the min and max voxels fixed.
        let base = smooth_volume(seed, (2, 24, 24));
        let mut r = rng(seed ^ 1);
        let voxels: Vec<f32> = base
            .voxels()
            .iter()
            .map(|&x| if x == 0.0 || x == 1.0 { x } else { (x + r.random_range(-eps..=eps)).clamp(0.0, 1.0) })
            .collect();
        let noisy = Volume::new(case("n"), base.shape(), voxels).unwrap();
        let cfg = ToyEmbedderConfig { target_side: 8, preprocess_side: 48 };
        let (a, b) = (embed_volume(&base, &cfg).unwrap(), embed_volume(&noisy, &cfg).unwrap());
        for (u, w) in a.vectors.iter().flatten().zip(b.vectors.iter().flatten()) {
            prop_assert!((u - w).abs() <= eps + 1e-5);
        }
    }
}

#[test]
fn embedding_sees_translation() {
    let v = smooth_volume(9, (1, 40, 40));
    let cfg = ToyEmbedderConfig::default();
    let shifted = translate_xy(&v, 0.25);
    assert_ne!(embed_volume(&v, &cfg).unwrap().vectors, embed_volume(&shifted, &cfg).unwrap().vectors);
}
