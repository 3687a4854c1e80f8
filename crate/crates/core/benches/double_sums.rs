//! Sequential against rayon-parallel execution of the two dominant double
//! sums: the Gagliardo seminorm and the eigen-matrix assembly.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use subfrac::eigen::{assemble, AssemblyConfig, Domain};
use subfrac::{
    gagliardo_seminorm, Exec, FracParams, GridSpec, GroupDescriptor, QuadratureConfig, QuasiNorm,
    Reduction, SampledFunction,
};

fn policies() -> [(&'static str, Exec); 3] {
    [
        ("sequential", Exec::sequential()),
        ("parallel-ordered", Exec::parallel()),
        (
            "parallel-unordered",
            Exec {
                parallel: true,
                reduction: Reduction::Unordered,
            },
        ),
    ]
}

fn bump(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2 < 1.0 {
        (1.0 - r2).powi(2)
    } else {
        0.0
    }
}

fn seminorm(c: &mut Criterion) {
    let params = FracParams::new(0.5, 2.0).unwrap();
    let cases = [
        (
            "R1-1024",
            GroupDescriptor::abelian(1).unwrap(),
            QuasiNorm::Euclidean,
            GridSpec::cube(1, 1.5, 1024).unwrap(),
        ),
        (
            "H1-12^3",
            GroupDescriptor::heisenberg(),
            QuasiNorm::Koranyi,
            GridSpec::centered(&[1.2, 1.2, 0.4], &[12, 12, 12]).unwrap(),
        ),
    ];
    let mut group = c.benchmark_group("seminorm");
    group.sample_size(10);
    for (name, g, norm, grid) in &cases {
        let u = SampledFunction::from_fn(g, grid.clone(), bump).unwrap();
        for (policy, exec) in policies() {
            let cfg = QuadratureConfig {
                exec,
                ..Default::default()
            };
            group.bench_with_input(BenchmarkId::new(policy, name), &u, |b, u| {
                b.iter(|| gagliardo_seminorm(g, *norm, &params, black_box(u), &cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn assembly(c: &mut Criterion) {
    let g = GroupDescriptor::heisenberg();
    let params = FracParams::new(0.5, 2.0).unwrap();
    let domain = Domain::ball(&g, QuasiNorm::Koranyi, 1.0, 6).unwrap();
    let mut group = c.benchmark_group("assembly");
    group.sample_size(10);
    for (policy, exec) in policies() {
        let cfg = AssemblyConfig {
            quad: QuadratureConfig {
                exec,
                ..Default::default()
            },
            ..AssemblyConfig::for_group(&g)
        };
        group.bench_function(BenchmarkId::new(policy, "H1-ball-m6"), |b| {
            b.iter(|| assemble(black_box(&domain), &params, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, seminorm, assembly);
criterion_main!(benches);
