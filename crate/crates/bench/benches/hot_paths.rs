use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use naf_bench::{default_network, shuffled_observation, HIDDEN, INPUT_DIM};
use naf_core::attack::random_probes;
use naf_core::coding::{capacity_table, generate_best_codebook};
use naf_core::{align, generate_codebook, input_gradient, max_correctable, TriggerObjective};

fn forward(c: &mut Criterion) {
    let net = default_network(0);
    let mut group = c.benchmark_group("forward");
    for batch in [1, 64, 1024] {
        let probes = random_probes(INPUT_DIM, batch, 3.0, 1);
        group.bench_with_input(BenchmarkId::from_parameter(batch), &probes, |b, p| {
            b.iter(|| net.forward(black_box(p)).unwrap())
        });
    }
    group.finish();
}

fn gradient(c: &mut Criterion) {
    let net = default_network(0);
    let obj = TriggerObjective::new(net.layer_name(1), vec![1.0; HIDDEN[1]]);
    let x = random_probes(INPUT_DIM, 1, 1.0, 2).row(0).to_vec();
    let ensemble: Vec<_> = (0..6).map(default_network).collect();
    let members: Vec<&_> = ensemble.iter().collect();
    c.bench_function("input_gradient/single", |b| {
        b.iter(|| input_gradient(&[&net], black_box(&x), &obj).unwrap())
    });
    c.bench_function("input_gradient/ensemble_6", |b| {
        b.iter(|| input_gradient(&members, black_box(&x), &obj).unwrap())
    });
}

fn alignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("align");
    for (n, t) in [(32, 60), (128, 160)] {
        let cb = generate_best_codebook(n, t, 2, 2 * max_correctable(n, t, 2, 1) + 1, 0).unwrap();
        let observed = shuffled_observation(&cb, cb.radius() + 3, 7);
        group.bench_with_input(BenchmarkId::new("decode_and_assign", format!("{n}x{t}")), &observed, |b, o| {
            b.iter(|| align(black_box(o), &cb).unwrap())
        });
    }
    group.finish();
}

fn codebook(c: &mut Criterion) {
    c.bench_function("codebook/32x60_d27", |b| b.iter(|| generate_codebook(32, 60, 2, 27, black_box(3)).unwrap()));
}

fn capacity(c: &mut Criterion) {
    let ts = [20, 40, 60, 80, 100, 120, 140, 160];
    c.bench_function("capacity/published_grid", |b| {
        b.iter(|| capacity_table(black_box(&[64, 128]), black_box(&ts), 2, 1))
    });
}

criterion_group!(benches, forward, gradient, alignment, codebook, capacity);
criterion_main!(benches);
