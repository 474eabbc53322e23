mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use voldup_core::calibration::{auc, confusion_at, roc_curve, youden_threshold, ScoredSet};
use voldup_core::evaluation::{score_queries, stage2_confusion, LabelledQuery};
use voldup_core::index::items_from_sets;
use voldup_core::retrieval::{case_histogram, normalized_count, score_query, QueryScore};
use voldup_core::{Backend, EmbeddingSet, Index, QueryLabel};

use common::*;

fn database(seed: u64, cases: usize, dim: usize, coarse: bool) -> Vec<EmbeddingSet> {
    let mut r = rng(seed);
    (0..cases)
        .map(|c| {
            let slices = r.random_range(1..=12);
            random_set(&mut r, &format!("c{c:02}"), slices, dim, coarse)
        })
        .collect()
}

fn query(seed: u64, dim: usize, coarse: bool) -> EmbeddingSet {
    let mut r = rng(seed);
    let slices = r.random_range(1..=16);
    random_set(&mut r, "q", slices, dim, coarse)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ck_matches_oracle_and_is_bounded(seed in any::<u64>(), cases in 1usize..10, dim in 1usize..6, coarse in any::<bool>()) {
        let db = database(seed, cases, dim, coarse);
        let q = query(seed ^ 1, dim, coarse);
        let index = Index::from_sets(&db, Backend::Exact).unwrap();
        let h = case_histogram(&q, &index, false).unwrap();
        let mut last = 0.0;
        for k in 1..=cases + 1 {
            let (c, _) = normalized_count(&h, k).unwrap();
            prop_assert_eq!(c, brute_force_ck(&q, &db, k).0);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(c >= last);
            last = c;
        }
        // Every slice hits something, so c saturates at 1.
        prop_assert_eq!(normalized_count(&h, h.counts.len()).unwrap().0, 1.0);
    }

    #[test]
    fn insertion_order_does_not_matter(seed in any::<u64>(), cases in 1usize..10, dim in 1usize..6) {
        let db = database(seed, cases, dim, true);
        let q = query(seed ^ 2, dim, true);
        let mut items = items_from_sets(&db);
        let a = Index::build(items.clone(), Backend::Exact).unwrap();
        items.shuffle(&mut rng(seed ^ 3));
        let b = Index::build(items, Backend::Exact).unwrap();
        for k in [1, 3] {
            let label = QueryLabel::non_duplicate();
            prop_assert_eq!(
                score_query(&q, &a, k, label.clone(), false).unwrap(),
                score_query(&q, &b, k, label, false).unwrap()
            );
        }
    }

    #[test]
    fn auc_matches_pair_counting(seed in any::<u64>()) {
        let s = random_scored_set(&mut rng(seed), "s", 60);
        let (p, n) = split_classes(&s);
        prop_assert!((auc(&roc_curve(&s).unwrap()) - mann_whitney(&p, &n)).abs() <= 1e-12);
    }

    #[test]
    fn auc_ignores_monotone_rescaling(seed in any::<u64>()) {
        let s = random_scored_set(&mut rng(seed), "s", 60);
        let mut t = s.clone();
        for it in &mut t.items {
            it.score = (3.0 * it.score).exp() - 7.0;
        }
        prop_assert_eq!(auc(&roc_curve(&s).unwrap()), auc(&roc_curve(&t).unwrap()));
    }

    #[test]
    fn youden_is_an_optimal_operating_point(seed in any::<u64>()) {
        let s = random_scored_set(&mut rng(seed), "s", 60);
        let r = roc_curve(&s).unwrap();
        let y = youden_threshold(&r);
        prop_assert!(r.points.iter().any(|p| p.threshold == y.threshold));
        let (p, n) = (r.positives as u64, r.negatives as u64);
        let key = |tp: u64, tn: u64| tp * n + tn * p;
        let yp = r.points.iter().find(|q| q.threshold == y.threshold).unwrap();
        prop_assert!(r.points.iter().all(|q| key(q.tp as u64, q.tn as u64) <= key(yp.tp as u64, yp.tn as u64)));
        prop_assert_eq!(y.threshold, brute_youden(&s));
    }

    #[test]
    fn roc_points_are_the_counted_rates(seed in any::<u64>()) {
        let s = random_scored_set(&mut rng(seed), "s", 60);
        for pt in roc_curve(&s).unwrap().points {
            prop_assert_eq!((pt.sensitivity, pt.specificity), rates(&s, pt.threshold));
        }
    }
}

/// Random scores with labels; positives carry a ground truth that the
/// top-1 case matches only sometimes.
fn random_scores(seed: u64) -> Vec<QueryScore> {
    let mut r = rng(seed);
    let n = r.random_range(2..40);
    (0..n)
        .map(|i| {
            let positive = i == 0 || (i > 1 && r.random_bool(0.5));
            let gt = case(&format!("g{}", r.random_range(0..3)));
            let top1 = Some(case(&format!("g{}", r.random_range(0..3))));
            QueryScore {
                query_case: case(&format!("q{i}")),
                c_k: r.random_range(0..=8) as f64 / 8.0,
                k: 1,
                top1_case: top1,
                label: if positive { QueryLabel::duplicate(gt) } else { QueryLabel::non_duplicate() },
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn stage2_never_beats_stage1(seed in any::<u64>(), t in 0.0f64..1.2) {
        let scores = random_scores(seed);
        let m = stage2_confusion("s", &scores, t).unwrap();
        prop_assert!(m.stage2.sensitivity <= m.stage1.sensitivity);
        prop_assert!(m.stage2.spec_stage2_folded <= m.stage2.spec_stage2_strict);
        prop_assert_eq!(m.stage2.spec_stage2_strict, m.stage1.specificity);
    }

    #[test]
    fn stage1_agrees_with_roc(seed in any::<u64>()) {
        let scores = random_scores(seed);
        let set = ScoredSet::from_scores(
            "s",
            &scores.iter().filter(|s| s.label.is_positive()).map(|s| s.c_k).collect::<Vec<_>>(),
            &scores.iter().filter(|s| !s.label.is_positive()).map(|s| s.c_k).collect::<Vec<_>>(),
        );
        for pt in roc_curve(&set).unwrap().points {
            let m = stage2_confusion("s", &scores, pt.threshold).unwrap();
            prop_assert_eq!((m.stage1.sensitivity, m.stage1.specificity), (pt.sensitivity, pt.specificity));
            prop_assert_eq!(m.stage1.counts, confusion_at(&set.items, pt.threshold));
        }
    }

    #[test]
    fn metrics_ignore_query_order(seed in any::<u64>(), t in 0.0f64..1.0) {
        let scores = random_scores(seed);
        let mut shuffled = scores.clone();
        shuffled.shuffle(&mut rng(seed ^ 9));
        prop_assert_eq!(stage2_confusion("s", &scores, t).unwrap(), stage2_confusion("s", &shuffled, t).unwrap());
    }
}

#[test]
fn self_queries_are_perfect() {
    let db = database(17, 8, 5, false);
    let index = Index::from_sets(&db, Backend::Exact).unwrap();
    let queries: Vec<LabelledQuery> = db
        .iter()
        .map(|e| LabelledQuery { embeddings: e.clone(), label: QueryLabel::duplicate(e.case_id.clone()) })
        .collect();
    let mut scores = score_queries(&queries, &index, 1, false).unwrap();
    assert!(scores.iter().all(|s| s.c_k == 1.0));
    scores.extend(score_queries(
        &[LabelledQuery { embeddings: query(5, 5, false), label: QueryLabel::non_duplicate() }],
        &index,
        1,
        false,
    )
    .unwrap());
    for t in [0.0, 0.25, 0.5, 1.0] {
        let m = stage2_confusion("self", &scores, t).unwrap();
        assert_eq!((m.stage1.sensitivity, m.stage2.sensitivity), (1.0, 1.0));
    }
}
