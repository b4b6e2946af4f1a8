use std::fmt;
use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method, SweepConfig};
use super::plan::{load_problem, plan, sampling_for, LoadedProblem};
use super::run::{run_experiment, write_outcome, RunOutcome};
use crate::error::{Error, Result};
use crate::objective::{
    best_weighted_constants, empirical_hessian_variance, exact_weighted_constants,
    lipschitz_constants, weighted_constants, GroupedProblem, Problem,
};
use crate::page::expected_complexity;
use crate::sampling::{
    composed_variance_exact, variance_exact, variance_mc, SamplingSpec,
};
use crate::taskgen::{gen_controlled_li, gen_controlled_lpm, write_task, TaskKind};

/// Pairs of points used by empirical Hessian-variance estimates in reports.
const EMPIRICAL_PAIRS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateParams {
    pub kind: TaskKind,
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub s: f64,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct GenerateReport {
    pub path: PathBuf,
    pub l_minus: f64,
    pub l_i_min: f64,
    pub l_i_mean: f64,
    pub l_i_max: f64,
    pub l_plus_sq: f64,
    pub l_pm_sq: f64,
    pub l_pm_sq_empirical: f64,
    pub mu: f64,
}

impl fmt::Display for GenerateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task written to {}", self.path.display())?;
        writeln!(f, "L_-              {:.6}", self.l_minus)?;
        writeln!(
            f,
            "L_i min/mean/max {:.6} / {:.6} / {:.6} (ratio {:.3})",
            self.l_i_min,
            self.l_i_mean,
            self.l_i_max,
            self.l_i_max / self.l_i_min
        )?;
        writeln!(f, "L_+^2            {:.6e}", self.l_plus_sq)?;
        writeln!(f, "L_+-^2           {:.6e}", self.l_pm_sq)?;
        writeln!(f, "L_+-^2 empirical {:.6e}", self.l_pm_sq_empirical)?;
        write!(f, "mu               {:.6e}", self.mu)
    }
}

/// Generates a quadratic task, writes it to `params.out` and reports its
/// smoothness constants.
pub fn cmd_generate(params: &GenerateParams) -> Result<GenerateReport> {
    let task = match params.kind {
        TaskKind::ControlledLpm => {
            gen_controlled_lpm(params.n, params.d, params.lambda, params.s, params.seed)?
        }
        TaskKind::ControlledLi => gen_controlled_li(params.n, params.d, params.s, params.seed)?,
    };
    if let Some(dir) = params.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_task(&task, &params.out)?;
    let problem = task.problem()?;
    let report = lipschitz_constants(&problem)?;
    let uniform = vec![1.0 / params.n as f64; params.n];
    let exact = exact_weighted_constants(&problem, &uniform)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let empirical = empirical_hessian_variance(&problem, &uniform, EMPIRICAL_PAIRS, &mut rng);
    let (min, max) = min_max(&report.l_i);
    Ok(GenerateReport {
        path: params.out.clone(),
        l_minus: report.l_minus,
        l_i_min: min,
        l_i_mean: report.mean_l_i(),
        l_i_max: max,
        l_plus_sq: exact.plus_sq,
        l_pm_sq: exact.pm_sq,
        l_pm_sq_empirical: empirical,
        mu: problem.mean_min_eigenvalue(),
    })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Runs `cfg` and writes its CSVs into `cfg.out_dir` when set.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let outcome = run_experiment(cfg)?;
    if let Some(dir) = &cfg.out_dir {
        write_outcome(dir, &outcome, cfg.chart)?;
    }
    Ok(outcome)
}

/// One line of the long-format sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub cell: String,
    pub method: String,
    pub tau: usize,
    pub tau_points: usize,
    pub s: Option<f64>,
    pub seed: u64,
    pub gamma: f64,
    pub p: f64,
    pub iterations: usize,
    pub calls_to_eps: Option<u64>,
    pub final_grad_norm_sq: f64,
    pub total_calls: u64,
}

fn sweep_rows(key: &str, cfg: &ExperimentConfig, outcome: &RunOutcome) -> Vec<SweepRow> {
    let s = &outcome.plan.summary;
    outcome
        .traces
        .iter()
        .map(|(seed, t)| SweepRow {
            cell: key.to_string(),
            method: s.method.clone(),
            tau: cfg.method.tau,
            tau_points: cfg.method.tau_points,
            s: cfg.generator.as_ref().map(|g| g.s),
            seed: *seed,
            gamma: s.gamma,
            p: s.p,
            iterations: s.iterations,
            calls_to_eps: cfg.schedule.epsilon.and_then(|e| t.calls_to_reach(e)),
            final_grad_norm_sq: t.last().grad_norm_sq,
            total_calls: t.total_calls,
        })
        .collect()
}

/// Runs every grid cell. With an output directory, each cell writes its own
/// subdirectory exactly as `cmd_run` would, and `sweep.csv` collects one row
/// per cell and seed.
pub fn cmd_sweep(sweep: &SweepConfig) -> Result<Vec<SweepRow>> {
    let cells = sweep.cells()?;
    let per_cell = super::run::with_workers(sweep.base.workers, || {
        cells
            .par_iter()
            .map(|(key, cfg)| {
                let mut cfg = cfg.clone();
                cfg.out_dir = sweep.base.out_dir.as_ref().map(|d| d.join(key));
                let outcome = cmd_run(&cfg)?;
                Ok(sweep_rows(key, &cfg, &outcome))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let rows: Vec<SweepRow> = per_cell.into_iter().flatten().collect();
    if let Some(dir) = &sweep.base.out_dir {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyParams {
    pub n: usize,
    pub d: usize,
    pub tau: usize,
    /// Random instances per sampling kind.
    pub trials: usize,
    /// Draws per instance when enumeration is too large.
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            n: 5,
            d: 3,
            tau: 2,
            trials: 20,
            mc_draws: 100_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CheckMode {
    /// Largest `|variance - bound|` over the instances.
    Exact { max_gap: f64, max_mean_err: f64 },
    /// Largest `(variance - bound) / SE` and mean z-score.
    MonteCarlo { max_excess_se: f64, max_mean_z: f64 },
    /// Largest `variance - bound` of a one-sided inequality.
    Inequality { max_excess: f64 },
    /// Difference between two sets of constants.
    Identity { diff: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyLine {
    pub name: String,
    pub mode: CheckMode,
    pub passed: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub lines: Vec<VerifyLine>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            let verdict = if l.passed { "PASS" } else { "FAIL" };
            let detail = match &l.mode {
                CheckMode::Exact { max_gap, max_mean_err } => {
                    format!("exact: max |gap| {max_gap:.3e}, max mean error {max_mean_err:.3e}")
                }
                CheckMode::MonteCarlo { max_excess_se, max_mean_z } => {
                    format!("monte carlo: max excess {max_excess_se:.2} SE, max mean z {max_mean_z:.2}")
                }
                CheckMode::Inequality { max_excess } => {
                    format!("inequality: max variance - bound {max_excess:.3e}")
                }
                CheckMode::Identity { diff } => format!("identity: difference {diff:.3e}"),
            };
            write!(f, "{verdict} {:<16} {detail}", l.name)?;
            if let Some(n) = &l.note {
                write!(f, " ({n})")?;
            }
            writeln!(f)?;
        }
        write!(f, "{}", if self.passed() { "all checks passed" } else { "verification FAILED" })
    }
}

/// Tolerance on exact equality gaps.
pub const EXACT_TOL: f64 = 1e-12;
/// Allowed Monte-Carlo excess, in standard errors.
pub const MC_SE: f64 = 4.0;

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Random sampling of kind `name` on `n` elements.
pub fn random_spec(name: &str, n: usize, tau: usize, rng: &mut ChaCha8Rng) -> Result<SamplingSpec> {
    match name {
        "uniform" => SamplingSpec::uniform(n, tau),
        "importance" => {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
            let total: f64 = raw.iter().sum();
            SamplingSpec::importance(raw.iter().map(|v| v / total).collect(), tau)
        }
        "nice" => SamplingSpec::nice(n, tau.min(n)),
        "independent" => SamplingSpec::independent((0..n).map(|_| rng.gen_range(0.1..0.9)).collect()),
        "extended-nice" => {
            let l: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=3)).collect();
            let total = l.iter().sum::<usize>();
            SamplingSpec::extended_nice(l, tau.min(total))
        }
        "full-batch" => SamplingSpec::full_batch(n),
        other => Err(Error::Config(format!("unknown sampling `{other}`"))),
    }
}

/// Sampling kinds covered by `cmd_verify`.
pub const VERIFY_KINDS: [&str; 6] =
    ["uniform", "importance", "nice", "independent", "extended-nice", "full-batch"];

/// Checks the variance identity of every sampling kind, the composed
/// inequality on two clients with two points each, and that importance
/// sampling with uniform probabilities has the constants of uniform
/// sampling.
pub fn cmd_verify(params: &VerifyParams) -> Result<VerifyReport> {
    if params.n == 0 || params.d == 0 || params.tau == 0 || params.trials == 0 {
        return Err(Error::Config("verify needs positive n, d, tau and trials".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut lines = Vec::new();
    for name in VERIFY_KINDS {
        let mut max_gap: f64 = 0.0;
        let mut max_mean_err: f64 = 0.0;
        let mut mc: Option<(f64, f64)> = None;
        for _ in 0..params.trials {
            let spec = random_spec(name, params.n, params.tau, &mut rng)?;
            let vectors = random_vectors(&mut rng, params.n, params.d);
            match variance_exact(&spec, &vectors) {
                Ok(v) => {
                    max_gap = max_gap.max((v.variance - v.rhs_bound).abs());
                    max_mean_err = max_mean_err.max(v.mean_err);
                }
                Err(Error::EnumerationBudget { .. }) => {
                    let m = variance_mc(&spec, &vectors, params.mc_draws, &mut rng)?;
                    let excess = if m.std_err > 0.0 {
                        (m.variance_est - m.rhs_bound) / m.std_err
                    } else {
                        0.0
                    };
                    let (e, z) = mc.unwrap_or((f64::NEG_INFINITY, 0.0));
                    mc = Some((e.max(excess), z.max(m.mean_z_max)));
                }
                Err(e) => return Err(e),
            }
        }
        lines.push(match mc {
            None => VerifyLine {
                name: name.to_string(),
                passed: max_gap <= EXACT_TOL && max_mean_err <= EXACT_TOL,
                mode: CheckMode::Exact { max_gap, max_mean_err },
                note: None,
            },
            Some((max_excess_se, max_mean_z)) => VerifyLine {
                name: name.to_string(),
                passed: max_excess_se <= MC_SE && max_mean_z <= MC_SE,
                mode: CheckMode::MonteCarlo { max_excess_se, max_mean_z },
                note: Some("enumeration budget exceeded; fell back to Monte Carlo".into()),
            },
        });
    }

    let outer = SamplingSpec::uniform(2, 1)?;
    let inner = vec![SamplingSpec::uniform(2, 1)?; 2];
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..params.trials {
        let vectors: Vec<Vec<Vec<f64>>> =
            (0..2).map(|_| random_vectors(&mut rng, 2, params.d)).collect();
        let v = composed_variance_exact(&outer, &inner, &vectors)?;
        max_excess = max_excess.max(v.variance - v.rhs_bound);
    }
    lines.push(VerifyLine {
        name: "composed 2x2".into(),
        passed: max_excess <= EXACT_TOL,
        mode: CheckMode::Inequality { max_excess },
        note: None,
    });

    let uniform = SamplingSpec::uniform(params.n, params.tau)?;
    let flat_q = SamplingSpec::importance(vec![1.0 / params.n as f64; params.n], params.tau)?;
    let diff = (uniform.a - flat_q.a).abs()
        + (uniform.b - flat_q.b).abs()
        + uniform
            .weights
            .iter()
            .zip(&flat_q.weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
        + (uniform.expected_cardinality - flat_q.expected_cardinality).abs();
    lines.push(VerifyLine {
        name: "importance=unif".into(),
        passed: diff == 0.0,
        mode: CheckMode::Identity { diff },
        note: None,
    });
    Ok(VerifyReport { lines })
}

/// Rate constant of one complexity row: the predicted calls are
/// `n + Delta_0 * rate / epsilon` up to constant factors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub name: String,
    pub rate: f64,
}

/// Parameters and predicted calls of one method under the configured
/// schedule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: String,
    pub gamma: f64,
    pub p: f64,
    pub iterations: Option<usize>,
    /// `n + 2 |S| T`; `n T` for full batches.
    pub predicted_calls: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstantsReport {
    pub n: usize,
    pub dim: usize,
    pub l_minus: f64,
    pub l_i_min: f64,
    pub l_i_mean: f64,
    pub l_i_max: f64,
    /// Exact uniform-weight constants, when Hessians are constant.
    pub l_plus_sq: Option<f64>,
    pub l_pm_sq: Option<f64>,
    pub method: String,
    /// Per-component bound `(1/n) sum L_i^2 / (n w_i)`.
    pub theorem1_sq: f64,
    pub exact: Option<(f64, f64)>,
    pub pm_sq_empirical: f64,
    pub methods: Vec<MethodRow>,
    pub rates: Vec<RateRow>,
    /// `rate(importance) / rate(original uniform)`.
    pub importance_vs_original: Option<f64>,
    /// `rate(stratified) / rate(uniform)` from the exact rate constants.
    pub group_vs_uniform: Option<f64>,
    /// `sqrt(g) / sqrt(n)`, the order-of-magnitude ratio.
    pub group_vs_uniform_order: Option<f64>,
}

impl ConstantsReport {
    pub fn rate(&self, name: &str) -> Option<f64> {
        self.rates.iter().find(|r| r.name == name).map(|r| r.rate)
    }
}

impl fmt::Display for ConstantsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n = {}, dim = {}", self.n, self.dim)?;
        writeln!(f, "L_-               {:.9e}", self.l_minus)?;
        writeln!(
            f,
            "L_i min/mean/max  {:.6e} / {:.6e} / {:.6e}",
            self.l_i_min, self.l_i_mean, self.l_i_max
        )?;
        if let (Some(a), Some(b)) = (self.l_plus_sq, self.l_pm_sq) {
            writeln!(f, "L_+^2, L_+-^2     {a:.9e}, {b:.9e}")?;
        }
        writeln!(f, "[{}]", self.method)?;
        writeln!(f, "  per-component bound L_+,w^2 = L_+-,w^2  {:.9e}", self.theorem1_sq)?;
        if let Some((a, b)) = self.exact {
            writeln!(f, "  exact L_+,w^2, L_+-,w^2               {a:.9e}, {b:.9e}")?;
        }
        writeln!(f, "  empirical L_+-,w^2                    {:.9e}", self.pm_sq_empirical)?;
        writeln!(f, "method         gamma          p              T          predicted calls")?;
        for m in &self.methods {
            writeln!(
                f,
                "{:<14} {:<14.6e} {:<14.6e} {:<10} {}",
                m.method,
                m.gamma,
                m.p,
                m.iterations.map_or("-".into(), |t| t.to_string()),
                m.predicted_calls.map_or("-".into(), |c| format!("{c:.0}"))
            )?;
        }
        writeln!(f, "complexity rate constants")?;
        for r in &self.rates {
            writeln!(f, "  {:<24} {:.9e}", r.name, r.rate)?;
        }
        if let Some(r) = self.importance_vs_original {
            writeln!(f, "importance / original uniform   {r:.9e}")?;
        }
        if let (Some(r), Some(o)) = (self.group_vs_uniform, self.group_vs_uniform_order) {
            writeln!(f, "stratified / uniform            {r:.9e} (order sqrt(g)/sqrt(n) = {o:.9e})")?;
        }
        Ok(())
    }
}

fn method_row(cfg: &ExperimentConfig, loaded: &LoadedProblem, method: Method) -> Result<MethodRow> {
    let mut c = cfg.clone();
    c.method.name = method;
    let has_schedule = c.schedule.iterations.is_some() || c.schedule.epsilon.is_some();
    if !has_schedule {
        c.schedule.iterations = Some(1);
    }
    let p = plan(&c, loaded)?;
    let s = &p.summary;
    let t = has_schedule.then_some(s.iterations);
    let calls = t.map(|t| match method {
        Method::FullBatch => (s.refresh_cost * t) as f64,
        _ => expected_complexity(s.refresh_cost, s.cardinality, t),
    });
    Ok(MethodRow {
        method: method.name().into(),
        gamma: s.gamma,
        p: s.p,
        iterations: t,
        predicted_calls: calls,
    })
}

/// `max(sqrt(n) sqrt(mean_i L_{i,+-}^2), g L_-)` for a grouped problem.
fn stratified_rate(grouped: &GroupedProblem, l_minus: f64) -> Result<f64> {
    let g = grouped.num_clients();
    let n = grouped.total_items() as f64;
    let mut total = 0.0;
    for i in 0..g {
        let client = grouped.client_problem(i);
        let rep = client.smoothness()?;
        let m = client.num_components();
        total += best_weighted_constants(&client, &rep, &vec![1.0 / m as f64; m])?.pm_sq;
    }
    Ok((n.sqrt() * (total / g as f64).sqrt()).max(g as f64 * l_minus))
}

/// Smoothness constants, theoretical parameters and complexity rates of the
/// configured problem and method.
pub fn cmd_constants(cfg: &ExperimentConfig) -> Result<ConstantsReport> {
    cfg.validate_with(false)?;
    let loaded = load_problem(&cfg.source()?)?;
    constants_for(cfg, &loaded)
}

pub fn constants_for(cfg: &ExperimentConfig, loaded: &LoadedProblem) -> Result<ConstantsReport> {
    let problem = loaded.problem.as_ref();
    let n = problem.num_components();
    let nf = n as f64;
    let report = lipschitz_constants(problem)?;
    let (l_i_min, l_i_max) = min_max(&report.l_i);
    let l_i_mean = report.mean_l_i();
    let uniform = vec![1.0 / nf; n];
    let exact_uniform = match exact_weighted_constants(problem, &uniform) {
        Ok(c) => Some(c),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let plus_sq = match exact_uniform {
        Some(c) => c.plus_sq,
        None => weighted_constants(&report.l_i, &uniform)?.plus_sq,
    };
    let pm_sq = exact_uniform.map_or(plus_sq, |c| c.pm_sq);

    let method = cfg.method.name;
    let spec = sampling_for(method, &report.l_i, cfg.method.tau)?;
    let theorem1 = weighted_constants(&report.l_i, &spec.weights)?;
    let exact = match exact_weighted_constants(problem, &spec.weights) {
        Ok(c) => Some((c.plus_sq, c.pm_sq)),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.first().copied().unwrap_or(1));
    let pm_sq_empirical = empirical_hessian_variance(problem, &spec.weights, EMPIRICAL_PAIRS, &mut rng);

    let mut methods = Vec::new();
    for m in Method::ALL {
        match method_row(cfg, loaded, m) {
            Ok(row) => methods.push(row),
            // e.g. importance weights need positive constants
            Err(Error::InvalidParameter(_)) => {}
            Err(e) => return Err(e),
        }
    }

    let sqrt_n = nf.sqrt();
    let mut rates = vec![
        RateRow {
            name: "independent".into(),
            rate: nf.powf(2.0 / 3.0) * l_i_mean,
        },
        RateRow {
            name: "uniform (original)".into(),
            rate: sqrt_n * plus_sq.sqrt(),
        },
        RateRow {
            name: "uniform (new)".into(),
            rate: (sqrt_n * pm_sq.sqrt()).max(report.l_minus),
        },
        RateRow {
            name: "importance".into(),
            rate: sqrt_n * l_i_mean,
        },
    ];
    let grouped = loaded
        .grouped
        .clone()
        .or_else(|| loaded.example.as_ref().and_then(|e| e.grouped.clone()));
    let mut group_vs_uniform = None;
    let mut group_vs_uniform_order = None;
    if let Some(g) = &grouped {
        // the stratified rate is stated over all items of the grouped problem
        let flat = g.flatten();
        let items = flat.num_components();
        let flat_rep = flat.smoothness()?;
        let flat_pm = best_weighted_constants(&flat, &flat_rep, &vec![1.0 / items as f64; items])?.pm_sq;
        let uniform_rate = ((items as f64).sqrt() * flat_pm.sqrt()).max(flat_rep.l_minus);
        let strat = stratified_rate(g, flat_rep.l_minus)?;
        rates.push(RateRow {
            name: "stratified".into(),
            rate: strat,
        });
        group_vs_uniform = Some(strat / uniform_rate);
        group_vs_uniform_order = Some((g.num_clients() as f64 / items as f64).sqrt());
    }
    let importance_vs_original = (plus_sq > 0.0).then(|| l_i_mean / plus_sq.sqrt());

    Ok(ConstantsReport {
        n,
        dim: problem.dim(),
        l_minus: report.l_minus,
        l_i_min,
        l_i_mean,
        l_i_max,
        l_plus_sq: exact_uniform.map(|c| c.plus_sq),
        l_pm_sq: exact_uniform.map(|c| c.pm_sq),
        method: method.name().into(),
        theorem1_sq: theorem1.plus_sq,
        exact,
        pm_sq_empirical,
        methods,
        rates,
        importance_vs_original,
        group_vs_uniform,
        group_vs_uniform_order,
    })
}
