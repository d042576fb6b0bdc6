use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use mfctrl::dynamics::{forward_flow, uniform_grid};
use mfctrl::simulate::{simulate_agents, Driver, SimConfig};
use mfctrl::{closed_loop_flow, global_steer, rational_realization, synthesize, synthesize_positive, FeedbackLaw};
use mfctrl_bench::{chain4, grid9};

fn flows(c: &mut Criterion) {
    let (g, x0, xt) = chain4();
    let steering = global_steer(&g, &x0, &xt, 1.0).unwrap();
    let grid = uniform_grid(1.0, 100);
    c.bench_function("forward_flow/chain4", |b| {
        b.iter(|| forward_flow(&g, black_box(&steering.schedule), &x0, &grid).unwrap())
    });
    let law = rational_realization(&g, &FeedbackLaw::lemma1_scaled(&g, &xt, 20.0).unwrap()).unwrap();
    let grid = uniform_grid(50.0, 500);
    c.bench_function("closed_loop_flow/chain4", |b| {
        b.iter(|| closed_loop_flow(&g, &law, black_box(&x0), &grid).unwrap())
    });
}

fn steering(c: &mut Criterion) {
    for (name, (g, x0, xt)) in [("chain4", chain4()), ("grid9", grid9())] {
        c.bench_function(&format!("global_steer/{name}"), |b| {
            b.iter(|| global_steer(&g, black_box(&x0), &xt, 1.0).unwrap())
        });
    }
}

fn synthesis(c: &mut Criterion) {
    let mut group = c.benchmark_group("lmi");
    group.sample_size(10);
    for (name, (g, _, xeq)) in [("chain4", chain4()), ("grid9", grid9())] {
        group.bench_function(format!("decentralized/{name}"), |b| {
            b.iter(|| synthesize(&g, black_box(&xeq), 0.1, 1e-6).unwrap())
        });
        group.bench_function(format!("positive/{name}"), |b| {
            b.iter(|| synthesize_positive(&g, black_box(&xeq), 0.1, 1e-6).unwrap())
        });
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let (g, x0, xeq) = chain4();
    let law = rational_realization(&g, &FeedbackLaw::lemma1_scaled(&g, &xeq, 20.0).unwrap()).unwrap();
    let mut group = c.benchmark_group("simulate_agents");
    group.sample_size(10);
    for agents in [50, 500] {
        let cfg = SimConfig::new(agents, 50.0, 7);
        group.bench_function(format!("chain4/N{agents}"), |b| {
            b.iter(|| simulate_agents(&g, Driver::Law(&law), black_box(&x0), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, flows, steering, synthesis, simulation);
criterion_main!(benches);
