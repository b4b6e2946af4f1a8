use criterion::{criterion_group, criterion_main, Criterion};
use pagesample_bench::{grouped, quadratic};
use pagesample_core::objective::lipschitz_constants;
use pagesample_core::page::{run_page, run_page_composed};
use pagesample_core::{PageConfig, SamplingSpec};

fn optimizer(c: &mut Criterion) {
    let problem = quadratic(1000);
    let spec = SamplingSpec::uniform(1000, 1).unwrap();
    let mut cfg = PageConfig::new(0.05, 1.0 / 1001.0, 2000, 1);
    cfg.monitor_every = Some(2000);
    c.bench_function("run_page_2000_iterations", |b| {
        b.iter(|| run_page(&problem, &spec, &cfg).unwrap())
    });

    let g = grouped(1000, 10);
    let outer = SamplingSpec::nice(10, 3).unwrap();
    let inner = vec![SamplingSpec::uniform(100, 1).unwrap(); 10];
    let mut cfg = PageConfig::new(0.05, 0.05, 500, 1);
    cfg.monitor_every = Some(500);
    c.bench_function("run_page_composed_500_iterations", |b| {
        b.iter(|| run_page_composed(&g, &outer, &inner, &cfg).unwrap())
    });
}

fn constants(c: &mut Criterion) {
    let problem = quadratic(1000);
    c.bench_function("lipschitz_constants_n1000_d10", |b| {
        b.iter(|| lipschitz_constants(&problem).unwrap())
    });
}

criterion_group!(benches, optimizer, constants);
criterion_main!(benches);
