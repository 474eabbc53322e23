//! Independent reference implementations shared by the integration tests.
//! Deliberately naive: no code is shared with the crate under test.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voldup_core::calibration::ScoredSet;
use voldup_core::{CaseId, EmbeddingSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn case(name: &str) -> CaseId {
    CaseId::new(name).unwrap()
}

/// Vectors drawn from a coarse integer grid when `coarse`, so exact distance
/// ties show up regularly.
pub fn random_set(rng: &mut impl Rng, id: &str, slices: usize, dim: usize, coarse: bool) -> EmbeddingSet {
    let vectors = (0..slices)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    if coarse {
                        rng.random_range(-2i32..=2) as f32
                    } else {
                        rng.random_range(-1.0f32..1.0)
                    }
                })
                .collect()
        })
        .collect();
    EmbeddingSet::new(case(id), dim, vectors).unwrap()
}

fn dist2(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] as f64 - b[i] as f64;
        s += d * d;
    }
    s
}

/// Full distance matrix, argmin per query slice (ties to the smaller case id,
/// then slice index), hand-counted histogram, top-k sum over n.
pub fn brute_force_ck(query: &EmbeddingSet, db: &[EmbeddingSet], k: usize) -> (f64, Option<CaseId>) {
    let mut matrix: Vec<Vec<(f64, &CaseId, usize)>> = Vec::new();
    for q in &query.vectors {
        let mut row = Vec::new();
        for set in db {
            for (j, v) in set.vectors.iter().enumerate() {
                row.push((dist2(q, v), &set.case_id, j));
            }
        }
        matrix.push(row);
    }
    let mut counts: BTreeMap<CaseId, usize> = BTreeMap::new();
    for row in &matrix {
        let mut best = &row[0];
        for cand in row {
            let better = cand.0 < best.0
                || (cand.0 == best.0 && (cand.1 < best.1 || (cand.1 == best.1 && cand.2 < best.2)));
            if better {
                best = cand;
            }
        }
        *counts.entry(best.1.clone()).or_insert(0) += 1;
    }
    let mut ranked: Vec<(CaseId, usize)> = counts.into_iter().collect();
    // Stable sort keeps the BTreeMap's ascending id order among equal counts.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    let top: usize = ranked.iter().take(k).map(|r| r.1).sum();
    (top as f64 / query.vectors.len() as f64, ranked.first().map(|r| r.0.clone()))
}

/// Mann–Whitney U / (P·N) with half credit for ties.
pub fn mann_whitney(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut u = 0.0;
    for &p in positives {
        for &n in negatives {
            if p > n {
                u += 1.0;
            } else if p == n {
                u += 0.5;
            }
        }
    }
    u / (positives.len() * negatives.len()) as f64
}

pub fn split_classes(s: &ScoredSet) -> (Vec<f64>, Vec<f64>) {
    let pos = s.items.iter().filter(|i| i.is_positive).map(|i| i.score).collect();
    let neg = s.items.iter().filter(|i| !i.is_positive).map(|i| i.score).collect();
    (pos, neg)
}

/// Sensitivity and specificity of `s` at `t` by direct counting.
pub fn rates(s: &ScoredSet, t: f64) -> (f64, f64) {
    let (pos, neg) = split_classes(s);
    let tp = pos.iter().filter(|&&x| x >= t).count();
    let tn = neg.iter().filter(|&&x| x < t).count();
    (tp as f64 / pos.len() as f64, tn as f64 / neg.len() as f64)
}

/// Youden threshold by trying every observed score plus one above the
/// maximum; ties keep the larger threshold.
pub fn brute_youden(s: &ScoredSet) -> f64 {
    let (pos, neg) = split_classes(s);
    let max = s.items.iter().map(|i| i.score).fold(f64::MIN, f64::max);
    let mut cands: Vec<f64> = s.items.iter().map(|i| i.score).collect();
    cands.push(max + 1.0);
    cands.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cands.dedup();
    let mut best = (cands[0], -1i64);
    for t in cands {
        let tp = pos.iter().filter(|&&x| x >= t).count() as i64;
        let tn = neg.iter().filter(|&&x| x < t).count() as i64;
        // Compare sens + spec on a common denominator to stay exact.
        let key = tp * neg.len() as i64 + tn * pos.len() as i64;
        if key > best.1 {
            best = (t, key);
        }
    }
    best.0
}

pub struct BruteCalibration {
    pub candidates: Vec<f64>,
    pub se: Vec<Vec<f64>>,
    pub sp: Vec<Vec<f64>>,
    pub t_opt: f64,
    pub chosen: usize,
}

/// Every set's Youden threshold evaluated on every set; best mean wins,
/// the earliest candidate on ties.
pub fn brute_calibration(sets: &[ScoredSet]) -> BruteCalibration {
    let candidates: Vec<f64> = sets.iter().map(brute_youden).collect();
    let n = sets.len();
    let mut se = vec![vec![0.0; n]; n];
    let mut sp = vec![vec![0.0; n]; n];
    let mut means = vec![0.0; n];
    for u in 0..n {
        let mut total = 0.0;
        for v in 0..n {
            let (a, b) = rates(&sets[v], candidates[u]);
            se[u][v] = a;
            sp[u][v] = b;
            total += a + b;
        }
        means[u] = total / n as f64;
    }
    let mut chosen = 0;
    for u in 0..n {
        if means[u] > means[chosen] {
            chosen = u;
        }
    }
    BruteCalibration {
        t_opt: candidates[chosen],
        candidates,
        se,
        sp,
        chosen,
    }
}

/// Scores on a coarse grid of `slices` steps, the way c(k) values look.
pub fn random_scored_set(rng: &mut impl Rng, name: &str, max_items: usize) -> ScoredSet {
    let slices = rng.random_range(1..=12u32);
    let p = rng.random_range(1..=max_items / 2);
    let n = rng.random_range(1..=max_items / 2);
    let pos: Vec<f64> = (0..p).map(|_| rng.random_range(0..=slices) as f64 / slices as f64).collect();
    // Negatives skew low but share the grid, so cross-class ties occur.
    let neg: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0..=slices).min(rng.random_range(0..=slices)) as f64 / slices as f64)
        .collect();
    ScoredSet::from_scores(name, &pos, &neg)
}

/// Plain 10·log10(1/MSE) on [0, 1] data.
pub fn psnr(a: &[f32], b: &[f32]) -> f64 {
    let mse: f64 = a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}
