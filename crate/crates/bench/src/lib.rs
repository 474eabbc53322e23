//! Seeded workloads shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use voldup_core::{CaseId, EmbeddingSet};

/// `cases` embedding sets of `slices` standard-normal vectors each.
pub fn gaussian_sets(cases: usize, slices: usize, dim: usize, seed: u64) -> Vec<EmbeddingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .map(|i| {
            let vectors = (0..slices)
                .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            EmbeddingSet::new(CaseId::new(format!("case_{i:04}")).unwrap(), dim, vectors).unwrap()
        })
        .collect()
}

/// Copies of `sets` with every component jittered by N(0, `sigma`²).
pub fn perturbed(sets: &[EmbeddingSet], sigma: f32, seed: u64) -> Vec<EmbeddingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sets.iter()
        .map(|s| {
            let mut s = s.clone();
            for v in &mut s.vectors {
                for x in v.iter_mut() {
                    let n: f32 = StandardNormal.sample(&mut rng);
                    *x += sigma * n;
                }
            }
            s
        })
        .collect()
}
