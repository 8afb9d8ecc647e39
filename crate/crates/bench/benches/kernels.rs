use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use del_bench::Fixture;
use del_core::assess_net::{forward_mask, mse_loss_and_grad};
use del_core::link_search::{greedy_search, SearchConfig};
use del_core::measure::MaskedSample;
use del_core::numerics::RngStream;
use del_core::rule_net::loss_and_grad;

fn rule_net(c: &mut Criterion) {
    let fx = Fixture::new(256);
    let evaluated: Vec<_> = fx.indexes.iter().map(|i| i.evaluate(None)).collect();
    let mut g = c.benchmark_group("rule_net");
    g.bench_function("forward_256", |b| {
        b.iter(|| {
            for (f, t) in &evaluated {
                black_box(fx.net.forward(f, t));
            }
        })
    });
    g.bench_function("loss_and_grad_256", |b| {
        b.iter(|| {
            for ((f, t), s) in evaluated.iter().zip(&fx.dataset.samples) {
                black_box(loss_and_grad(&fx.net, f, t, s.y, &s.y_feat));
            }
        })
    });
    g.finish();
}

fn measures(c: &mut Criterion) {
    let fx = Fixture::new(256);
    let mut g = c.benchmark_group("measures");
    g.bench_function("evaluate_all_256", |b| {
        b.iter(|| {
            for s in &fx.dataset.samples {
                black_box(fx.measures.evaluate_all(MaskedSample::unmasked(s)).unwrap());
            }
        })
    });
    let keep: Vec<Vec<bool>> = fx.indexes.iter().map(|i| (0..i.n_rows()).map(|r| r % 3 != 0).collect()).collect();
    g.bench_function("indexed_masked_values_256", |b| {
        b.iter(|| {
            for (i, k) in fx.indexes.iter().zip(&keep) {
                black_box(i.values(Some(k)));
            }
        })
    });
    g.finish();
}

fn assess(c: &mut Criterion) {
    let fx = Fixture::new(64);
    let mut g = c.benchmark_group("assess_net");
    g.bench_function("forward_64", |b| {
        b.iter(|| {
            for x in &fx.inputs {
                black_box(forward_mask(&fx.weights, &x.graph, &x.features, &x.base).unwrap());
            }
        })
    });
    let targets: Vec<Vec<f64>> = fx.inputs.iter().map(|x| vec![1.0; x.features.rows()]).collect();
    let batch: Vec<_> = fx.inputs.iter().zip(&targets).take(8).map(|(x, t)| (x, t.as_slice())).collect();
    g.bench_function("loss_and_grad_batch_8", |b| {
        b.iter(|| black_box(mse_loss_and_grad(&fx.weights, &batch).unwrap()))
    });
    g.finish();
}

fn search(c: &mut Criterion) {
    let fx = Fixture::new(256);
    let cfg = SearchConfig::default();
    // Ask for the opposite label so every call runs the full search budget or finds a fix.
    let cases: Vec<usize> = (0..fx.dataset.len()).take(32).collect();
    c.bench_function("greedy_search_32", |b| {
        b.iter_batched(
            || RngStream::new(7),
            |mut rng| {
                for &i in &cases {
                    let y = fx.dataset.samples[i].y.flipped();
                    black_box(greedy_search(&fx.indexes[i], y, &fx.net, &fx.graphs[i], &cfg, &mut rng));
                }
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, rule_net, measures, assess, search);
criterion_main!(benches);
