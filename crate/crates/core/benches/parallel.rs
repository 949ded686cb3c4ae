//! Rayon pool against the calling thread on the data-parallel stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use arena_core::bco::{run_sectors, BcoParams, QuadraticTestbed};
use arena_core::forecast::arima_grid_search;
use arena_core::nn::gradcheck::{run_suite, standard_cases};
use arena_core::par::Execution;
use arena_core::sim::{default_event_schedule, gen_season, SimParams};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn simulate(c: &mut Criterion) {
    let params = SimParams::default();
    let events = default_event_schedule(20, 12, 0);
    let mut g = c.benchmark_group("gen_season");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| gen_season(&params, 20, &events, exec).unwrap()));
    }
    g.finish();
}

fn arima_grid(c: &mut Criterion) {
    let ds = gen_season(&SimParams { n_sectors: 1, ..Default::default() }, 10, &[], Execution::Sequential).unwrap();
    let series: Vec<f64> =
        ds.traces.values().flatten().flat_map(|t| t.epochs.iter().map(|(_, r)| r.avg_active_users)).collect();
    let mut g = c.benchmark_group("arima_grid_search");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| arima_grid_search(&series, 3, 1, 2, exec).unwrap()));
    }
    g.finish();
}

fn gradcheck(c: &mut Criterion) {
    let cases = standard_cases();
    let mut g = c.benchmark_group("gradcheck_suite");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_suite(&cases, 2, 1e-4, 1e-4, exec).unwrap()));
    }
    g.finish();
}

fn bco(c: &mut Criterion) {
    let envs: Vec<QuadraticTestbed> = (0..16).map(|s| QuadraticTestbed::new(0.05, s)).collect();
    let mut g = c.benchmark_group("bco_sectors");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_sectors(envs.clone(), 2000, &BcoParams::default(), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, simulate, arima_grid, gradcheck, bco);
criterion_main!(benches);
