use brsl::lincheck::emptiness_lp;
use brsl::EnvKind;
use brsl_bench::{layer, lp_problem, scene};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn lp(c: &mut Criterion) {
    let mut g = c.benchmark_group("emptiness_lp");
    for (rows, cols) in [(3, 20), (3, 60), (3, 120)] {
        let p = lp_problem(rows, cols, 1);
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{rows}x{cols}")),
            &p,
            |b, p| b.iter(|| emptiness_lp(black_box(p))),
        );
    }
    g.finish();
}

fn layer_ops(c: &mut Criterion) {
    for kind in [EnvKind::PointMass2D, EnvKind::Unicycle2D] {
        let layer = layer(kind);
        let s = scene(layer.env(), 0);
        let mut g = c.benchmark_group(kind.name());
        g.bench_function("tube", |b| {
            b.iter(|| layer.tube(black_box(&s.plan), &s.x0).unwrap())
        });
        g.bench_function("certify", |b| {
            b.iter(|| {
                layer
                    .certify(black_box(&s.plan), &s.obstacles, &s.x0)
                    .unwrap()
            })
        });
        g.sample_size(20);
        g.bench_function("safety_step", |b| {
            b.iter(|| {
                let mut cached = None;
                layer
                    .safety_step(black_box(&s.x0), &s.plan, &s.obstacles, &mut cached)
                    .unwrap()
            })
        });
        g.finish();
    }
}

criterion_group!(benches, lp, layer_ops);
criterion_main!(benches);
