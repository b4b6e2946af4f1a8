//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints exactly one PASS/FAIL line, even when another fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use pagesample_core::data::{read_libsvm, shard, LogisticProblem};
use pagesample_core::harness::{
    cmd_constants, load_problem, median, random_spec, run_experiment, run_loaded, DatasetSource,
    ExampleSource, ExperimentConfig, GeneratorSource, Method, MethodConfig, Schedule,
};
use pagesample_core::objective::{
    empirical_hessian_variance, exact_weighted_constants, full_grad, grad_check,
    lipschitz_constants, weighted_constants,
};
use pagesample_core::page::{run_page, run_page_composed};
use pagesample_core::sampling::{composed_variance_exact, variance_exact, variance_mc};
use pagesample_core::taskgen::{example_fixture, gen_controlled_lpm, stratify, ExampleParams, StratifyRule};
use pagesample_core::{PageConfig, Point, Problem, SamplingSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TABLE_KINDS: [&str; 5] = ["uniform", "importance", "nice", "independent", "extended-nice"];

type Outcome = Result<(bool, String), String>;

fn australian() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/australian")
}

fn vectors(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn lpm(s: f64, seed: u64, reseed: bool) -> GeneratorSource {
    GeneratorSource {
        kind: "controlled-lpm".into(),
        n: 1000,
        d: 10,
        lambda: 0.001,
        s,
        seed,
        reseed,
    }
}

fn li(s: f64, seed: u64, reseed: bool) -> GeneratorSource {
    GeneratorSource {
        kind: "controlled-li".into(),
        n: 1000,
        d: 10,
        lambda: 0.0,
        s,
        seed,
        reseed,
    }
}

fn generator_config(g: GeneratorSource, method: Method, schedule: Schedule) -> ExperimentConfig {
    ExperimentConfig {
        generator: Some(g),
        method: MethodConfig { name: method, tau: 1, ..MethodConfig::default() },
        schedule,
        ..ExperimentConfig::default()
    }
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn ab_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for name in TABLE_KINDS {
        for _ in 0..20 {
            let n = rng.gen_range(2..=6);
            let tau = rng.gen_range(1..=n);
            let spec = random_spec(name, n, tau, &mut rng).map_err(e)?;
            let v = variance_exact(&spec, &vectors(&mut rng, n, 3)).map_err(e)?;
            worst = worst.max((v.variance - v.rhs_bound).abs());
            count += 1;
        }
    }
    Ok((worst <= 1e-12, format!("{count} instances, max |gap| {worst:.2e}")))
}

fn unbiasedness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_exact: f64 = 0.0;
    for name in TABLE_KINDS {
        for _ in 0..20 {
            let n = rng.gen_range(2..=6);
            let tau = rng.gen_range(1..=n);
            let spec = random_spec(name, n, tau, &mut rng).map_err(e)?;
            let v = variance_exact(&spec, &vectors(&mut rng, n, 3)).map_err(e)?;
            worst_exact = worst_exact.max(v.mean_err);
        }
    }
    let mut worst_z: f64 = 0.0;
    for name in TABLE_KINDS {
        let spec = random_spec(name, 1000, 10, &mut rng).map_err(e)?;
        let vs = vectors(&mut rng, 1000, 3);
        let m = variance_mc(&spec, &vs, 100_000, &mut rng).map_err(e)?;
        worst_z = worst_z.max(m.mean_z_max);
    }
    Ok((
        worst_exact <= 1e-12 && worst_z <= 4.0,
        format!("enumerated max mean error {worst_exact:.2e}, monte-carlo max z {worst_z:.2}"),
    ))
}

fn importance_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut ordered = true;
    for _ in 0..100 {
        let n = rng.gen_range(1..=50);
        let l: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let total: f64 = l.iter().sum();
        let q: Vec<f64> = l.iter().map(|v| v / total).collect();
        let imp = weighted_constants(&l, &q).map_err(e)?.plus_sq;
        let mean = total / n as f64;
        worst = worst.max((imp - mean * mean).abs() / (mean * mean));
        let uni = weighted_constants(&l, &vec![1.0 / n as f64; n]).map_err(e)?.plus_sq;
        ordered &= imp <= uni * (1.0 + 1e-12);
    }
    Ok((
        worst <= 1e-12 && ordered,
        format!("max relative error {worst:.2e}, importance <= uniform: {ordered}"),
    ))
}

fn nonconvex_bound() -> Outcome {
    let cfg = generator_config(
        lpm(0.5, 1, false),
        Method::Uniform,
        Schedule { epsilon: Some(1e-3), ..Schedule::default() },
    );
    let loaded = load_problem(&cfg.source().map_err(e)?).map_err(e)?;
    let out = run_loaded(&cfg, &loaded).map_err(e)?;
    let s = &out.plan.summary;
    let mut total = 0.0;
    for (_, t) in &out.traces {
        let g = full_grad(loaded.problem.as_ref(), &t.selected_point).map_err(e)?;
        total += g.iter().map(|v| v * v).sum::<f64>();
    }
    let mean = total / out.traces.len() as f64;
    let delta0 = s.delta0.ok_or("no delta0")?;
    let bound = 1.5 * 2.0 * delta0 / (s.gamma * s.iterations as f64);
    Ok((
        mean <= bound,
        format!("mean |grad|^2 {mean:.3e} <= {bound:.3e} (T = {}, gamma = {:.3e})", s.iterations, s.gamma),
    ))
}

/// Least-squares slope of `ln(f - f*)` against the iteration, over records
/// that are still well above round-off.
fn log_gap_slope(points: &[(usize, f64)]) -> Option<f64> {
    let floor = points.first()?.1 * 1e-12;
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, gap)| *gap > floor && gap.is_finite())
        .map(|&(t, gap)| (t as f64, gap.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn pl_rate() -> Outcome {
    let cfg = generator_config(
        lpm(0.5, 1, false),
        Method::Uniform,
        Schedule { epsilon: Some(1e-3), pl: true, ..Schedule::default() },
    );
    let loaded = load_problem(&cfg.source().map_err(e)?).map_err(e)?;
    let f_star = loaded.problem.optimal_value().ok_or("optimum unknown")?;
    let out = run_loaded(&cfg, &loaded).map_err(e)?;
    let s = &out.plan.summary;
    let mu = s.mu.ok_or("no PL constant")?;
    let mut slopes = Vec::new();
    for (_, t) in &out.traces {
        let pts: Vec<(usize, f64)> = t.records.iter().map(|r| (r.iter, r.objective - f_star)).collect();
        slopes.push(log_gap_slope(&pts).ok_or("too few records above round-off")?);
    }
    let med = median(&slopes);
    let target = (1.0 - s.gamma * mu).ln();
    Ok((
        med <= 0.9 * target,
        format!("median slope {med:.3e} <= {:.3e} (gamma = {:.3e}, mu = {mu:.1e})", 0.9 * target, s.gamma),
    ))
}

fn median_calls(calls: &[Option<u64>]) -> f64 {
    let v: Vec<f64> = calls.iter().map(|c| c.map_or(f64::INFINITY, |c| c as f64)).collect();
    median(&v)
}

fn li_ordering() -> Outcome {
    let schedule = Schedule {
        epsilon: Some(1e-3),
        max_iterations: Some(400_000),
        monitor_every: Some(20),
        ..Schedule::default()
    };
    let mut med = Vec::new();
    for method in [Method::Importance, Method::Uniform, Method::Vanilla] {
        let out = run_experiment(&generator_config(li(10.0, 1, true), method, schedule.clone())).map_err(e)?;
        med.push(median_calls(&out.calls_to_reach(1e-3)));
    }
    let mut predicted = Vec::new();
    for seed in pagesample_core::harness::default_seeds() {
        let cfg = generator_config(li(10.0, seed, false), Method::Uniform, Schedule::default());
        let loaded = load_problem(&cfg.source().map_err(e)?).map_err(e)?;
        let p = loaded.problem.as_ref();
        let n = p.num_components();
        let rep = lipschitz_constants(p).map_err(e)?;
        let plus_sq = exact_weighted_constants(p, &vec![1.0 / n as f64; n]).map_err(e)?.plus_sq;
        predicted.push(rep.mean_l_i() / plus_sq.sqrt());
    }
    let predicted = median(&predicted);
    let ratio = med[0] / med[2];
    let ordered = med[0] < med[1] && med[1] < med[2];
    Ok((
        ordered && ratio <= 3.0 * predicted,
        format!(
            "median calls importance {:.3e} < uniform {:.3e} < vanilla {:.3e}; ratio {ratio:.3e} <= 3 x {predicted:.3e}",
            med[0], med[1], med[2]
        ),
    ))
}

fn lpm_improvement() -> Outcome {
    let schedule = Schedule {
        epsilon: Some(1e-3),
        max_iterations: Some(8000),
        monitor_every: Some(1),
        ..Schedule::default()
    };
    let mut ok = true;
    let mut notes = Vec::new();
    for s in [0.0, 0.1] {
        let run = |m| run_experiment(&generator_config(lpm(s, 1, true), m, schedule.clone()));
        let uni = run(Method::Uniform).map_err(e)?.calls_to_reach(1e-3);
        let van = run(Method::Vanilla).map_err(e)?.calls_to_reach(1e-3);
        let wins = uni
            .iter()
            .zip(&van)
            .filter(|(u, v)| match (u, v) {
                (Some(u), Some(v)) => u < v,
                (Some(_), None) => true,
                _ => false,
            })
            .count();
        ok &= wins >= 8;
        notes.push(format!("s = {s}: {wins}/{}", uni.len()));
    }
    Ok((ok, format!("uniform beats vanilla in {}", notes.join(", "))))
}

fn composition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let outer = SamplingSpec::uniform(2, 1).map_err(e)?;
    let inner = vec![SamplingSpec::uniform(2, 1).map_err(e)?; 2];
    let mut worst = f64::INFINITY;
    for _ in 0..20 {
        let vs: Vec<Vec<Vec<f64>>> = (0..2).map(|_| vectors(&mut rng, 2, 3)).collect();
        let v = composed_variance_exact(&outer, &inner, &vs).map_err(e)?;
        worst = worst.min(v.rhs_bound - v.variance);
    }

    let task = gen_controlled_lpm(40, 5, 0.01, 0.5, 2).map_err(e)?;
    let base: Arc<dyn Problem> = Arc::new(task.problem().map_err(e)?);
    let grouped = stratify(base, 4, StratifyRule::Contiguous).map_err(e)?;
    let level = grouped.client_level();
    let spec = SamplingSpec::nice(4, 2).map_err(e)?;
    let inner: Vec<SamplingSpec> = grouped
        .group_sizes()
        .iter()
        .map(|&m| SamplingSpec::full_batch(m))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let mut identical = true;
    for seed in 1..=5 {
        let mut cfg = PageConfig::new(0.05, 0.2, 300, seed);
        cfg.monitor_every = Some(7);
        let a = run_page_composed(&grouped, &spec, &inner, &cfg).map_err(e)?;
        let b = run_page(&level, &spec, &cfg).map_err(e)?;
        let same_records = a.records.len() == b.records.len()
            && a.records.iter().zip(&b.records).all(|(x, y)| {
                x.iter == y.iter
                    && x.grad_norm_sq.to_bits() == y.grad_norm_sq.to_bits()
                    && x.objective.to_bits() == y.objective.to_bits()
                    && x.refreshed == y.refreshed
            });
        let same_point = a.final_point.iter().zip(b.final_point.iter()).all(|(x, y)| x.to_bits() == y.to_bits());
        identical &= same_records && same_point;
    }
    Ok((
        worst >= -1e-12 && identical,
        format!("min rhs - variance {worst:.2e}; full-batch inner reproduces flat run bitwise: {identical}"),
    ))
}

fn example(which: u8, n: usize, a: f64, b: f64, b1: f64, g: usize, m: usize) -> ExperimentConfig {
    ExperimentConfig {
        example: Some(ExampleSource { which, n, a, b, b1, g, m }),
        ..ExperimentConfig::default()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

fn examples() -> Outcome {
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let ex1 = example_fixture(ExampleParams::Opposed { n: 10, a: 5.0, b: 2.0 }).map_err(e)?;
    let p1 = ex1.problem.as_ref();
    let w = vec![0.1; 10];
    let exact = exact_weighted_constants(p1, &w).map_err(e)?;
    let rep = lipschitz_constants(p1).map_err(e)?;
    let empirical = empirical_hessian_variance(p1, &w, 200, &mut rng);
    for (name, got, want) in [
        ("ex1 L-", rep.l_minus, 2.0),
        ("ex1 L+^2", exact.plus_sq, 29.0),
        ("ex1 L+-^2", exact.pm_sq, 25.0),
        ("ex1 empirical L+-^2", empirical, 25.0),
        ("ex1 fixture L+^2", ex1.constants.l_plus_sq, 29.0),
        ("ex1 fixture L+-^2", ex1.constants.l_pm_sq, 25.0),
    ] {
        if !close(got, want) {
            fails.push(format!("{name} {got} != {want}"));
        }
    }

    let r2 = cmd_constants(&example(2, 4, 0.0, 4.0, 0.0, 0, 0)).map_err(e)?;
    let plus = r2.l_plus_sq.ok_or("no exact L+")?.sqrt();
    let ratio2 = r2.importance_vs_original.ok_or("no importance ratio")?;
    for (name, got, want) in [
        ("ex2 L-", r2.l_minus, 1.0),
        ("ex2 mean L_i", r2.l_i_mean, 1.0),
        ("ex2 L+", plus, 2.0),
        ("ex2 importance/original", ratio2, 0.5),
    ] {
        if !close(got, want) {
            fails.push(format!("{name} {got} != {want}"));
        }
    }

    let (b1, g, m) = (3.0, 3usize, 2usize);
    let ex3 = example_fixture(ExampleParams::Groups { b1, g, m }).map_err(e)?;
    let r3 = cmd_constants(&example(3, 0, 0.0, 0.0, b1, g, m)).map_err(e)?;
    let (gf, nf) = (g as f64, (g * m) as f64);
    let want_exact = gf.sqrt() / (nf.sqrt() * (1.0 - 1.0 / gf).sqrt());
    let want_order = gf.sqrt() / nf.sqrt();
    let group_pm_max = ex3
        .constants
        .group_pm_sq
        .as_ref()
        .map_or(f64::NAN, |v| v.iter().cloned().fold(0.0, f64::max));
    let grouped = ex3.grouped.as_ref().ok_or("example 3 has no groups")?;
    let mut client_pm: f64 = 0.0;
    for i in 0..g {
        let c = grouped.client_problem(i);
        client_pm = client_pm.max(exact_weighted_constants(&c, &vec![1.0 / m as f64; m]).map_err(e)?.pm_sq);
    }
    for (name, got, want) in [
        ("ex3 L+-^2", r3.l_pm_sq.ok_or("no exact L+-")?, 2.0),
        ("ex3 fixture L+-^2", ex3.constants.l_pm_sq, 2.0),
        ("ex3 L_i,+- (fixture)", group_pm_max, 0.0),
        ("ex3 L_i,+- (exact)", client_pm, 0.0),
        ("ex3 stratified/uniform", r3.group_vs_uniform.ok_or("no group ratio")?, want_exact),
        ("ex3 order ratio", r3.group_vs_uniform_order.ok_or("no order ratio")?, want_order),
    ] {
        if !close(got, want) {
            fails.push(format!("{name} {got} != {want}"));
        }
    }
    let detail = if fails.is_empty() {
        format!("all constants match; stratified/uniform {want_exact:.6}, order sqrt(g/n) {want_order:.6}")
    } else {
        fails.join("; ")
    };
    Ok((fails.is_empty(), detail))
}

fn random_point(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Point {
    Point::new((0..d).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn gradient_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let h = 1e-6;
    let quad = gen_controlled_lpm(50, 10, 0.001, 0.5, 1).map_err(e)?.problem().map_err(e)?;
    let rows = read_libsvm(&australian()).map_err(e)?;
    let logistic = LogisticProblem::new(&rows, 0.001).map_err(e)?;
    let grouped = shard(&rows, 0.001, 10, 0).map_err(e)?;
    let d = logistic.dim();
    let checks = [
        ("quadratic", grad_check(&quad, &random_point(&mut rng, 10, 1.0), h)),
        ("logistic", grad_check(&logistic, &random_point(&mut rng, d, 0.5), h)),
        ("client level", grad_check(&grouped.client_level(), &random_point(&mut rng, d, 0.5), h)),
        ("flattened", grad_check(&grouped.flatten(), &random_point(&mut rng, d, 0.5), h)),
    ];
    let ok = checks.iter().all(|(_, err)| *err < 1e-5);
    let detail = checks.iter().map(|(n, err)| format!("{n} {err:.1e}")).collect::<Vec<_>>().join(", ");
    Ok((ok, detail))
}

fn federated() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for tau in [1, 3] {
        let mut cfg = ExperimentConfig {
            dataset: Some(DatasetSource {
                path: australian(),
                lambda: 0.001,
                clients: Some(10),
                shard_seed: 0,
            }),
            method: MethodConfig { name: Method::Uniform, tau, ..MethodConfig::default() },
            ..ExperimentConfig::default()
        };
        let loaded = load_problem(&cfg.source().map_err(e)?).map_err(e)?;
        let x0 = loaded.problem.initial_point();
        let mut g0 = vec![0.0; x0.len()];
        loaded.problem.full_grad_into(&x0, &mut g0);
        let g0_sq: f64 = g0.iter().map(|v| v * v).sum();
        cfg.schedule = Schedule {
            epsilon: Some(0.1 * g0_sq),
            delta0: Some(std::f64::consts::LN_2),
            ..Schedule::default()
        };
        let out = match run_loaded(&cfg, &loaded) {
            Ok(o) => o,
            Err(err) => {
                ok = false;
                notes.push(format!("tau {tau}: {err}"));
                continue;
            }
        };
        let worst = out
            .traces
            .iter()
            .map(|(_, t)| t.last().grad_norm_sq / t.initial().grad_norm_sq)
            .fold(0.0, f64::max);
        ok &= worst < 0.1;
        notes.push(format!("tau {tau}: worst final/initial {worst:.2e} (T = {})", out.plan.summary.iterations));
    }
    Ok((ok, notes.join(", ")))
}

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "weighted AB inequality is exact", limit: Duration::from_secs(10), check: ab_exactness },
        Criterion { id: 2, name: "estimators are unbiased", limit: Duration::from_secs(30), check: unbiasedness },
        Criterion { id: 3, name: "importance weights minimize L_+,w", limit: Duration::from_secs(1), check: importance_identity },
        Criterion { id: 4, name: "nonconvex stationarity bound", limit: Duration::from_secs(300), check: nonconvex_bound },
        Criterion { id: 5, name: "linear rate under PL", limit: Duration::from_secs(300), check: pl_rate },
        Criterion { id: 6, name: "importance < uniform < vanilla on L_i spread", limit: Duration::from_secs(600), check: li_ordering },
        Criterion { id: 7, name: "uniform beats vanilla for small L_+-", limit: Duration::from_secs(600), check: lpm_improvement },
        Criterion { id: 8, name: "composed sampling", limit: Duration::from_secs(30), check: composition },
        Criterion { id: 9, name: "analytic example constants", limit: Duration::from_secs(1), check: examples },
        Criterion { id: 10, name: "gradient oracles", limit: Duration::from_secs(30), check: gradient_oracles },
        Criterion { id: 11, name: "federated logistic regression", limit: Duration::from_secs(300), check: federated },
    ];
    let filter: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.check));
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok(Ok(r)) => r,
            Ok(Err(err)) => (false, format!("error: {err}")),
            Err(_) => (false, "panicked".into()),
        };
        let in_time = elapsed <= c.limit;
        let passed = passed && in_time;
        if !passed {
            failed += 1;
        }
        println!(
            "{} {:>2} {:<46} {:>8.2}s / {:>4}s  {detail}{}",
            if passed { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            if in_time { "" } else { " [over time limit]" },
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
