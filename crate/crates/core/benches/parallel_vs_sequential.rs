use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lqpursuit::escape::RadonScan;
use lqpursuit::sim::SweepSetup;
use lqpursuit::*;
use nalgebra::DMatrix;

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn radon_scan(c: &mut Criterion) {
    let spec = example_one_spec();
    let p = solve_value_riccati(&spec, &StepControl::for_spec(&spec)).unwrap();
    let boundary: DMatrix<f64> = -p.eval(1.0).unwrap();
    let mut group = c.benchmark_group("radon_scan");
    for points in [20_000, 200_000] {
        for execution in MODES {
            let scan = RadonScan { points, execution };
            group.bench_with_input(
                BenchmarkId::new(format!("{execution:?}"), points),
                &scan,
                |b, scan| {
                    b.iter(|| {
                        // Floor below the escape so the whole range is scanned.
                        detect_escape_radon(&spec, 1.0, &boundary, 0.5 + 1e-3, 1e-9, scan).unwrap()
                    })
                },
            );
        }
    }
    group.finish();
}

fn deviation_sweep_bench(c: &mut Criterion) {
    let spec = example_one_spec();
    let p = solve_value_riccati(&spec, &StepControl::for_spec(&spec)).unwrap();
    let cs: Vec<f64> = (0..64).map(|k| k as f64 / 16.0).collect();
    let mut group = c.benchmark_group("deviation_sweep");
    for execution in MODES {
        let setup = SweepSetup {
            execution,
            ..SweepSetup::open_loop(&spec)
        };
        group.bench_function(format!("{execution:?}"), |b| {
            b.iter(|| deviation_sweep(&spec, &p, &setup, black_box(&cs)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, radon_scan, deviation_sweep_bench);
criterion_main!(benches);
