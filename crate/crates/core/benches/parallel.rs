//! Sequential versus rayon execution on the three data-parallel workloads:
//! exact state enumeration, simulation replications and an optimizer sweep.
//!
//! Build without default features to measure the fallback only:
//! `cargo bench -p urllc-core --no-default-features`.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use urllc_core::exact_queue::{blocking_report, ExactOptions, LossClass};
use urllc_core::exec::map_indexed;
use urllc_core::harq::{optimize, HarqScheme, OptimizerOptions, Regime};
use urllc_core::sim::{simulate, SimConfig};
use urllc_core::traffic::{ClassPlan, SystemConfig, TrafficClass};
use urllc_core::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn traffic(name: &str, rate: f64, payload: u32, sinr: f64, feedback: f64) -> TrafficClass {
    TrafficClass {
        name: name.into(),
        arrival_rate: rate,
        payload_bits: payload,
        sinr_linear: sinr,
        deadline: 1e-3,
        reliability_eps: 1e-6,
        feedback_delay: feedback,
    }
}

fn exact_enumeration(c: &mut Criterion) {
    let classes = [
        LossClass::new(20.0, 2.0, 1.0).unwrap(),
        LossClass::new(10.0, 3.0, 1.0).unwrap(),
        LossClass::new(5.0, 5.0, 1.0).unwrap(),
    ];
    let mut group = c.benchmark_group("exact_enumeration");
    for (name, exec) in MODES {
        let opts = ExactOptions { exec, ..Default::default() };
        group.bench_with_input(BenchmarkId::new(name, 240), &opts, |b, opts| {
            b.iter(|| blocking_report(black_box(&classes), 240.0, opts).unwrap())
        });
    }
    group.finish();
}

fn simulation_replications(c: &mut Criterion) {
    let plans: Vec<ClassPlan> = [
        (traffic("a", 4000.0, 256, 1.0, 0.125e-3), 3),
        (traffic("b", 2000.0, 256, 10.0, 0.0), 1),
    ]
    .into_iter()
    .map(|(class, m)| {
        let scheme = HarqScheme::homogeneous(&class, m, 1.0).unwrap();
        ClassPlan { class, scheme }
    })
    .collect();
    let bandwidth = 2.0 * plans.iter().map(|p| p.scheme.stage_bandwidth).sum::<f64>();
    let mut group = c.benchmark_group("simulation_replications");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SimConfig {
            system: SystemConfig { bandwidth, channel_use_density: 1.0, classes: plans.clone() },
            horizon: 1.0,
            warmup: 0.01,
            seed: 1,
            replications: 16,
            trace: false,
            exec,
        };
        group.bench_with_input(BenchmarkId::new(name, 16), &cfg, |b, cfg| {
            b.iter(|| simulate(black_box(cfg)).unwrap())
        });
    }
    group.finish();
}

fn optimizer_sweep(c: &mut Criterion) {
    let cells: Vec<TrafficClass> = [64u32, 256, 1000, 2000]
        .iter()
        .flat_map(|&l| (0..=20).map(move |db| traffic("cell", 1.0, l, 10f64.powf(f64::from(db) / 10.0), 0.125e-3)))
        .collect();
    let mut group = c.benchmark_group("optimizer_sweep");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, cells.len()), |b| {
            b.iter(|| {
                map_indexed(cells.len(), exec, |i| {
                    optimize(&cells[i], Regime::Mean, f64::INFINITY, 1.0, &OptimizerOptions::default())
                        .unwrap()
                        .best_scheme
                        .stages
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, exact_enumeration, simulation_replications, optimizer_sweep);
criterion_main!(benches);
