//! Criterion kernels for the hot paths of the solvers.

use criterion::{black_box, BenchmarkId, Criterion};
use wavenet::chain::{chain_stable, delta_recurrence, ChainSpec, FluxSign};
use wavenet::counterex::{circuit_probe, dirichlet_convergents, ProbeShift};
use wavenet::dynamics::{init_state, stable_step, InitialData, Stepper};
use wavenet::linalg::C64;
use wavenet::mesh::Mesh;
use wavenet::resolvent::{assemble_generator, resolvent_norm};
use wavenet::spectra::char_value;
use wavenet::{GraphSpec, Length, MetricGraph, Variant};

pub fn pi_tree() -> MetricGraph {
    GraphSpec::new(Variant::Tree)
        .root("r")
        .mass("a", 1.0)
        .controlled("b")
        .controlled("c")
        .edge("e1", "r", "a", 1.0)
        .edge("e2", "a", "b", 2.0)
        .edge("e3", "a", "c", 1.5)
        .build()
        .expect("valid tree")
}

fn characteristic(c: &mut Criterion) {
    let g = pi_tree();
    c.bench_function("char_value", |b| b.iter(|| char_value(&g, black_box(C64::new(-0.3, 17.0)))));
}

fn chains(c: &mut Criterion) {
    let x: Vec<f64> = (1..=8).map(|k| 0.7 * k as f64).collect();
    let cs: Vec<f64> = (1..8).map(|k| 0.3 - 0.1 * k as f64).collect();
    c.bench_function("delta_recurrence_n8", |b| b.iter(|| delta_recurrence(black_box(&x), black_box(&cs))));
    let spec = ChainSpec::from_values(&[1.0, 2.0, 1.3, 0.8, 2.2], &[1.0, 4.0, 1.0, 2.0]).expect("valid chain");
    c.bench_function("chain_stable_n5", |b| b.iter(|| chain_stable(black_box(&spec), 1e-9, FluxSign::Kirchhoff)));
}

fn stepping(c: &mut Criterion) {
    let g = pi_tree();
    let mut group = c.benchmark_group("stepper");
    for cells in [32.0, 128.0] {
        let mesh = Mesh::new(&g, cells).expect("mesh");
        let mut state = init_state(&g, &mesh, &InitialData::generic(&g)).expect("initial data");
        let mut stepper = Stepper::new(&mesh, 0.9 * stable_step(&mesh)).expect("stepper");
        group.bench_with_input(BenchmarkId::from_parameter(cells), &cells, |b, _| b.iter(|| stepper.step(&mut state)));
    }
    group.finish();
}

fn resolvent(c: &mut Criterion) {
    let g = pi_tree();
    let mut group = c.benchmark_group("resolvent_norm");
    group.sample_size(10);
    for h in [0.05, 0.0125] {
        let gen = assemble_generator(&g, h).expect("generator");
        group.bench_with_input(BenchmarkId::from_parameter(h), &h, |b, _| {
            b.iter(|| resolvent_norm(&gen, black_box(7.3)))
        });
    }
    group.finish();
}

fn counterexample(c: &mut Criterion) {
    let l4 = Length::sqrt_of(2, 1);
    let pairs = dirichlet_convergents(&l4, 16).expect("convergents");
    let last = *pairs.last().expect("nonempty");
    c.bench_function("convergents_16", |b| b.iter(|| dirichlet_convergents(black_box(&l4), 16)));
    c.bench_function("circuit_probe", |b| b.iter(|| circuit_probe(black_box(last), &l4, ProbeShift::Shifted)));
}

pub fn benchmarks(c: &mut Criterion) {
    characteristic(c);
    chains(c);
    stepping(c);
    resolvent(c);
    counterexample(c);
}
