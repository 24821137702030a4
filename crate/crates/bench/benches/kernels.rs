use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use cssi_bench::{example1_batch, random_predictions};
use cssi_core::eval::roc;
use cssi_core::oracle::{check_cssi, fixtures, run_campaign, Campaign};
use cssi_core::rng;

fn bench_roc(c: &mut Criterion) {
    let mut g = c.benchmark_group("roc");
    for n in [1_000, 10_000] {
        let preds = random_predictions(n, 3);
        g.bench_with_input(BenchmarkId::from_parameter(n), &preds, |b, p| b.iter(|| roc(black_box(p)).unwrap()));
    }
    g.finish();
}

fn bench_ncd_loss(c: &mut Criterion) {
    let (model, data) = example1_batch(1_000, vec![64, 64, 64]);
    let x = model.standardize_x(data.x.view());
    let y = model.standardize_y(data.y.view());
    let noise = model.draw_noise(data.len(), &mut rng::seeded(5));
    c.bench_function("ncd_loss_and_grad/1000x64x3", |b| {
        b.iter(|| model.loss_and_grad(black_box(&x), black_box(&y), &data.truth, &noise, 0.5).unwrap())
    });
    c.bench_function("ncd_loss_only/1000x64x3", |b| {
        b.iter(|| model.loss_only(black_box(&x), black_box(&y), &data.truth, &noise, 0.5).unwrap())
    });
}

fn bench_oracle(c: &mut Criterion) {
    let d = fixtures::example1(6).unwrap();
    let full = d.table.full_region();
    let set = cssi_core::ParentSet::from_one_based(&[1, 2]);
    c.bench_function("check_cssi/example1_6bins", |b| b.iter(|| check_cssi(black_box(&d.table), &full, set).unwrap()));
    let mut g = c.benchmark_group("campaign");
    g.sample_size(10);
    g.bench_function("uniqueness/20", |b| b.iter(|| run_campaign(Campaign::Uniqueness, 1, 20).unwrap()));
    g.finish();
}

criterion_group!(benches, bench_roc, bench_ncd_loss, bench_oracle);
criterion_main!(benches);
