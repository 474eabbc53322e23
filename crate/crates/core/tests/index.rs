mod common;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use voldup_core::index::{HnswParams, IndexedItem, LshParams};
use voldup_core::{Backend, Error, Index};

use common::{case, rng};

fn items(seed: u64, n: usize, dim: usize, coarse: bool) -> Vec<IndexedItem> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| IndexedItem {
            case_id: case(&format!("c{:03}", r.random_range(0..(n / 3).max(1)))),
            slice_index: i,
            vector: (0..dim)
                .map(|_| if coarse { r.random_range(-1i32..=1) as f32 } else { StandardNormal.sample(&mut r) })
                .collect(),
        })
        .collect()
}

/// O(N·d) scan sorted by (distance, case id, slice index).
fn brute_knn(items: &[IndexedItem], q: &[f32], k: usize) -> Vec<(String, usize, f64)> {
    let mut all: Vec<(String, usize, f64)> = items
        .iter()
        .map(|it| {
            let d: f64 = it.vector.iter().zip(q).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
            (it.case_id.as_str().to_string(), it.slice_index, d.sqrt())
        })
        .collect();
    all.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}

fn backends(seed: u64) -> [Backend; 3] {
    [
        Backend::Exact,
        Backend::Lsh(LshParams { seed, ..LshParams::default() }),
        Backend::Hnsw(HnswParams { seed, ..HnswParams::default() }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exact_equals_brute_force(seed in any::<u64>(), n in 1usize..300, dim in 1usize..12, k in 1usize..8, coarse in any::<bool>()) {
        let its = items(seed, n, dim, coarse);
        let index = Index::build(its.clone(), Backend::Exact).unwrap();
        let mut r = rng(seed ^ 0xabc);
        for _ in 0..5 {
            let q: Vec<f32> = (0..dim).map(|_| if coarse { r.random_range(-1i32..=1) as f32 } else { r.random_range(-2.0..2.0) }).collect();
            let got: Vec<(String, usize, f64)> = index
                .search(&q, k)
                .unwrap()
                .into_iter()
                .map(|h| (h.case_id.as_str().to_string(), h.slice_index, h.distance))
                .collect();
            let want = brute_knn(&its, &q, k);
            prop_assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                prop_assert_eq!((&g.0, g.1), (&w.0, w.1));
                prop_assert!((g.2 - w.2).abs() <= 1e-9 * (1.0 + w.2));
            }
        }
    }

    #[test]
    fn ann_distances_are_exact_and_sorted(seed in any::<u64>(), n in 1usize..200, dim in 1usize..16, k in 1usize..6) {
        let its = items(seed, n, dim, false);
        let mut r = rng(seed ^ 0xdef);
        for backend in backends(seed) {
            let index = Index::build(its.clone(), backend).unwrap();
            let q: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
            let hits = index.search(&q, k).unwrap();
            prop_assert!(!hits.is_empty() && hits.len() <= k);
            prop_assert!(hits.windows(2).all(|w| w[0].distance <= w[1].distance));
            for h in &hits {
                let it = its.iter().find(|it| it.slice_index == h.slice_index).unwrap();
                prop_assert_eq!(&it.case_id, &h.case_id);
                let d: f64 = it.vector.iter().zip(&q).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum::<f64>().sqrt();
                prop_assert!((d - h.distance).abs() <= 1e-9 * (1.0 + d));
            }
        }
    }

    #[test]
    fn stored_vector_is_found_at_zero(seed in any::<u64>(), n in 1usize..150, dim in 1usize..16) {
        let its = items(seed, n, dim, false);
        let pick = (seed as usize) % n;
        for backend in backends(seed) {
            let index = Index::build(its.clone(), backend).unwrap();
            let hit = &index.search(&its[pick].vector, 1).unwrap()[0];
            prop_assert_eq!(hit.distance, 0.0);
        }
    }
}

#[test]
fn two_point_example() {
    let its = vec![
        IndexedItem { case_id: case("A"), slice_index: 0, vector: vec![0.0, 0.0] },
        IndexedItem { case_id: case("B"), slice_index: 0, vector: vec![10.0, 0.0] },
    ];
    let index = Index::build(its, Backend::Exact).unwrap();
    let hit = &index.search(&[1.0, 0.0], 1).unwrap()[0];
    assert_eq!((hit.case_id.as_str(), hit.distance), ("A", 1.0));
}

#[test]
fn equidistant_ties_prefer_smaller_ids() {
    let its = vec![
        IndexedItem { case_id: case("B"), slice_index: 0, vector: vec![1.0] },
        IndexedItem { case_id: case("A"), slice_index: 3, vector: vec![-1.0] },
        IndexedItem { case_id: case("A"), slice_index: 1, vector: vec![1.0] },
    ];
    for backend in backends(1) {
        let index = Index::build(its.clone(), backend).unwrap();
        let hits = index.search(&[0.0], 3).unwrap();
        let order: Vec<(&str, usize)> = hits.iter().map(|h| (h.case_id.as_str(), h.slice_index)).collect();
        assert_eq!(order, vec![("A", 1), ("A", 3), ("B", 0)], "{}", backend.name());
    }
}

#[test]
fn errors() {
    assert!(matches!(Index::build(vec![], Backend::Exact), Err(Error::EmptyDatabase)));
    let its = items(1, 10, 4, false);
    let index = Index::build(its, Backend::Exact).unwrap();
    assert!(matches!(index.search(&[0.0; 3], 1), Err(Error::DimensionMismatch { expected: 4, actual: 3 })));
    let mut ragged = items(1, 3, 4, false);
    ragged[2].vector.pop();
    assert!(matches!(Index::build(ragged, Backend::Exact), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn duplicate_case_ids_are_rejected() {
    let mut r = rng(3);
    let a = common::random_set(&mut r, "same", 2, 3, false);
    let b = common::random_set(&mut r, "same", 2, 3, false);
    assert!(matches!(Index::from_sets(&[a, b], Backend::Exact), Err(Error::DuplicateCaseId(_))));
}

#[test]
fn hnsw_and_lsh_are_seed_deterministic() {
    let its = items(5, 400, 8, false);
    let h = |seed| Index::build(its.clone(), Backend::Hnsw(HnswParams { seed, ..HnswParams::default() })).unwrap();
    assert_eq!(h(1).hnsw_adjacency(), h(1).hnsw_adjacency());
    let l = |seed| Index::build(its.clone(), Backend::Lsh(LshParams { seed, ..LshParams::default() })).unwrap();
    assert_eq!(l(1).lsh_signatures(&its[0].vector), l(1).lsh_signatures(&its[0].vector));
    assert_eq!(l(2).lsh_signatures(&its[7].vector), l(2).lsh_signatures(&its[7].vector.clone()));
}

fn recall(index: &Index, exact: &Index, queries: &[Vec<f32>]) -> f64 {
    let hits = queries
        .iter()
        .filter(|q| {
            let (a, b) = (&index.search(q, 1).unwrap()[0], &exact.search(q, 1).unwrap()[0]);
            (&a.case_id, a.slice_index) == (&b.case_id, b.slice_index)
        })
        .count();
    hits as f64 / queries.len() as f64
}

/// Paired queries: every setting is measured on the same jittered rows.
#[test]
fn recall_does_not_drop_with_more_effort() {
    let its = items(11, 2000, 32, false);
    let exact = Index::build(its.clone(), Backend::Exact).unwrap();
    let mut r = rng(12);
    let queries: Vec<Vec<f32>> = (0..300)
        .map(|_| {
            let row = &its[r.random_range(0..its.len())].vector;
            row.iter().map(|&x| { let n: f32 = StandardNormal.sample(&mut r); x + 0.5 * n }).collect()
        })
        .collect();
    let mut last = 0.0;
    for ef in [1, 4, 16, 64] {
        let p = HnswParams { ef_search: ef, ..HnswParams::default() };
        let got = recall(&Index::build(its.clone(), Backend::Hnsw(p)).unwrap(), &exact, &queries);
        assert!(got >= last - 0.01, "ef_search {ef}: {got} < {last}");
        last = got;
    }
    let mut last = 0.0;
    for tables in [1, 2, 4, 8, 16] {
        let p = LshParams { num_tables: tables, ..LshParams::default() };
        let got = recall(&Index::build(its.clone(), Backend::Lsh(p)).unwrap(), &exact, &queries);
        assert!(got >= last - 0.01, "num_tables {tables}: {got} < {last}");
        last = got;
    }
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let its = items(21, 300, 8, false);
    let q = vec![0.1f32; 8];
    for backend in backends(4) {
        let index = Index::build(its.clone(), backend).unwrap();
        let path = dir.path().join(format!("{}.json", backend.name()));
        index.save(&path).unwrap();
        let back = Index::load(&path).unwrap();
        assert_eq!(back.search(&q, 5).unwrap(), index.search(&q, 5).unwrap());
        assert_eq!(back.backend(), index.backend());
    }
}
