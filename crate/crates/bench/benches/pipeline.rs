use criterion::{criterion_group, criterion_main, Criterion};
use voldup_bench::{gaussian_sets, perturbed};
use voldup_core::benchmark::generate_synthetic_dataset;
use voldup_core::embed::{embed_volume, ToyEmbedderConfig};
use voldup_core::retrieval::score_query;
use voldup_core::{Backend, Index, QueryLabel};

fn embed(c: &mut Criterion) {
    let volume = generate_synthetic_dataset(2, (32, 40, 40), 0).unwrap().remove(0);
    let cfg = ToyEmbedderConfig::default();
    c.bench_function("toy_embed_32x40x40", |b| b.iter(|| embed_volume(&volume, &cfg).unwrap()));
}

fn retrieval(c: &mut Criterion) {
    let db = gaussian_sets(100, 32, 256, 3);
    let queries = perturbed(&db[..10], 0.1, 4);
    let index = Index::from_sets(&db, Backend::Exact).unwrap();
    c.bench_function("score_query_exact_100x32", |b| {
        b.iter(|| {
            for q in &queries {
                let label = QueryLabel::duplicate(q.case_id.clone());
                std::hint::black_box(score_query(q, &index, 3, label, false).unwrap());
            }
        })
    });
}

criterion_group!(benches, embed, retrieval);
criterion_main!(benches);
