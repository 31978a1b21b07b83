use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use spde2d::model::{ModelParams, NodeSet, Noise};
use spde2d::rng::Philox;
use spde2d::sim::{CoordinateSim, Scheme, SynthMode, Synthesizer, Truncation};
use spde2d::special::{psi, PsiQuery};

fn case1() -> ModelParams {
    ModelParams::new(0.0, 0.2, 0.2, 0.2, 1.0, 0.5, Noise::Q1).unwrap()
}

fn coefficients(l: usize) -> Array2<f64> {
    let g = Philox::new(11);
    Array2::from_shape_fn((l, l), |(i, j)| g.normal(i as u32 + 1, j as u32 + 1, 0))
}

fn synthesis(c: &mut Criterion) {
    let spec = case1().spectrum().unwrap();
    let mut group = c.benchmark_group("synthesis");
    group.sample_size(10);
    for (l, m) in [(256usize, 32usize), (2000, 200)] {
        let trunc = Truncation::square(l).unwrap();
        let coef = coefficients(l);
        let grid = NodeSet::uniform(m);
        for mode in [SynthMode::Naive, SynthMode::Folded] {
            let syn = Synthesizer::new(&spec, trunc, &grid, &grid, mode).unwrap();
            group.bench_with_input(BenchmarkId::new(format!("{mode:?}"), format!("L{l}_M{m}")), &coef, |b, coef| {
                b.iter(|| syn.synthesize(black_box(coef.view())).unwrap())
            });
        }
        let shifted = NodeSet::shifted(0.005, m).unwrap();
        let syn = Synthesizer::new(&spec, trunc, &shifted, &shifted, SynthMode::Auto).unwrap();
        group.bench_with_input(BenchmarkId::new("Shifted", format!("L{l}_M{m}")), &coef, |b, coef| {
            b.iter(|| syn.synthesize(black_box(coef.view())).unwrap())
        });
    }
    group.finish();
}

fn psi_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("psi");
    for (r, a) in [(0.3, 0.5), (1.0, 1.0), (3.0, 1.9)] {
        let q = PsiQuery::new(r, a, 0.2).unwrap();
        group.bench_function(format!("r{r}_a{a}"), |b| b.iter(|| psi(black_box(&q), 1e-10).unwrap()));
    }
    group.finish();
}

fn ou_stepping(c: &mut Criterion) {
    let spec = case1().spectrum().unwrap();
    let mut group = c.benchmark_group("ou_step");
    group.sample_size(10);
    for l in [500usize, 2000] {
        let trunc = Truncation::square(l).unwrap();
        for (name, scheme) in [("exact", Scheme::Exact), ("em", Scheme::em())] {
            let mut sim = CoordinateSim::new(&spec, trunc, 1e-3, scheme, 5).unwrap();
            group.bench_function(format!("{name}_L{l}"), |b| b.iter(|| sim.advance()));
        }
    }
    group.finish();
}

criterion_group!(benches, synthesis, psi_eval, ou_stepping);
criterion_main!(benches);
