use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};
use webforge_bench::instructions;
use webforge_core::learn::{decontaminate, jaccard, DecontamConfig, Embedder, HashingEmbedder};

fn pairwise_jaccard(c: &mut Criterion) {
    let texts = instructions(2, 5);
    c.bench_function("jaccard/pair", |b| b.iter(|| jaccard(black_box(&texts[0]), black_box(&texts[1]))));
}

fn embed(c: &mut Criterion) {
    let texts = instructions(100, 6);
    let embedder = HashingEmbedder::default();
    let mut group = c.benchmark_group("hashing_embedder");
    group.throughput(Throughput::Elements(texts.len() as u64));
    group.bench_function("100", |b| b.iter(|| embedder.embed(black_box(&texts)).unwrap()));
    group.finish();
}

fn full_pass(c: &mut Criterion) {
    let items = instructions(200, 1);
    let bench = instructions(50, 2);
    let embedder = HashingEmbedder::default();
    let cfg = DecontamConfig::default();
    let mut group = c.benchmark_group("decontaminate");
    group.sample_size(20);
    group.bench_function("200x50", |b| {
        b.iter(|| decontaminate(items.clone(), |s| s.as_str(), &bench, &embedder, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, pairwise_jaccard, embed, full_pass);
criterion_main!(benches);
