use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use histmap::corpus::extract_patches;
use histmap::metrics::{dilate_raster, evaluate_pair, MetricConfig, StructuringElement};
use histmap::segnet::{build_model, SegConfig};
use histmap::stylizer::{rasterize, StyleSpec};
use histmap::Collection;
use histmap_bench::{features, label_map, tile};

fn metrics(c: &mut Criterion) {
    let mask = label_map(512, 1).data.map(|&v| v == histmap::ClassId::Forest);
    let mut g = c.benchmark_group("dilate_512");
    for w in [1usize, 3, 8] {
        g.bench_with_input(BenchmarkId::new("square", w), &w, |b, &w| {
            b.iter(|| dilate_raster(&mask, w, StructuringElement::Square))
        });
        g.bench_with_input(BenchmarkId::new("disk", w), &w, |b, &w| {
            b.iter(|| dilate_raster(&mask, w, StructuringElement::Disk))
        });
    }
    g.finish();
    let (p, t) = (label_map(512, 2), label_map(512, 3));
    c.bench_function("evaluate_pair_512_w3", |b| b.iter(|| evaluate_pair(&p, &t, &MetricConfig::default())));
}

fn tiling(c: &mut Criterion) {
    let t = tile(1000);
    let l = label_map(1000, 4);
    c.bench_function("extract_patches_1000_by_128", |b| b.iter(|| extract_patches(&t, Some(&l), 128)));
}

fn stylize(c: &mut Criterion) {
    let t = tile(256);
    let f = features(200, 256.0, 5);
    let spec = StyleSpec::default_for(Collection::Modern);
    c.bench_function("rasterize_200_features_256", |b| b.iter(|| rasterize(&f, &t, &spec)));
}

fn network(c: &mut Criterion) {
    let model = build_model(&SegConfig::toy(), 0).expect("model");
    let t = tile(128);
    let mut g = c.benchmark_group("segnet");
    g.sample_size(10);
    g.bench_function("predict_toy_128", |b| b.iter(|| model.predict_image(&t.image, 128)));
    g.finish();
}

criterion_group!(benches, metrics, tiling, stylize, network);
criterion_main!(benches);
