use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use tradevar_bench::{dataset, spec};
use tradevar_core::aggregation::{build_portfolio, portfolio_price_t0};
use tradevar_core::decomposition::volume_cv_matrix;
use tradevar_core::synthetic::generate;
use tradevar_core::trade_model::align_to_grid;
use tradevar_core::variance::analyze_variance;
use tradevar_core::{AlignMode, RegimeThresholds};

const SHAPES: [(usize, usize); 3] = [(1, 1000), (5, 1000), (5, 10_000)];

fn label(j: usize, n: usize) -> String {
    format!("J{j}xN{n}")
}

fn align(c: &mut Criterion) {
    let mut g = c.benchmark_group("align");
    for (j, n) in SHAPES {
        let data = dataset(j, n);
        let ticks = data.ticks();
        let window = data.window().unwrap();
        let ids = data.portfolio.securities();
        g.bench_with_input(BenchmarkId::from_parameter(label(j, n)), &ticks, |b, t| {
            b.iter(|| align_to_grid(black_box(t), &window, &ids, AlignMode::Strict).unwrap())
        });
    }
    g.finish();
}

fn portfolio(c: &mut Criterion) {
    let mut g = c.benchmark_group("portfolio");
    for (j, n) in SHAPES {
        let data = dataset(j, n);
        g.bench_function(label(j, n), |b| {
            b.iter(|| build_portfolio(black_box(&data.series), &data.portfolio).unwrap())
        });
    }
    g.finish();
}

fn variance(c: &mut Criterion) {
    let mut g = c.benchmark_group("analyze_variance");
    let thresholds = RegimeThresholds::default();
    for (j, n) in SHAPES {
        let data = dataset(j, n);
        let (norm, port) = build_portfolio(&data.series, &data.portfolio).unwrap();
        let s0 = portfolio_price_t0(&data.portfolio);
        g.bench_function(label(j, n), |b| {
            b.iter(|| analyze_variance(black_box(&port), s0, &thresholds).unwrap())
        });
        let weights = data.portfolio.share_weights();
        g.bench_function(format!("chi_matrix/{}", label(j, n)), |b| {
            b.iter(|| volume_cv_matrix(black_box(&norm), &weights).unwrap())
        });
    }
    g.finish();
}

fn generator(c: &mut Criterion) {
    let mut g = c.benchmark_group("generate");
    g.sample_size(20);
    for (j, n) in SHAPES {
        let s = spec(j, n);
        g.bench_function(label(j, n), |b| b.iter(|| generate(black_box(&s)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, align, portfolio, variance, generator);
criterion_main!(benches);
