//! The PAGE optimizer, its two-level (client x data) variant, and the
//! theoretical choices of stepsize, refresh probability and iteration budget.
//!
//! One iteration moves `x <- x - gamma g`, then either refreshes `g` with the
//! full gradient (probability `p`) or adds a sampled estimate of the
//! gradient difference between the new and the old point.

mod params;

pub use params::{
    default_p, expected_calls, expected_complexity, iteration_budget, lyapunov,
    stepsize_composed, stepsize_nonconvex, stepsize_pl, stepsize_vanilla,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::objective::{GroupedProblem, Point, Problem};
use crate::sampling::{SamplingKind, SamplingSpec};

/// Which iterate a run reports as its output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputRule {
    /// Uniformly random among `x^0, ..., x^{T-1}`.
    #[default]
    UniformRandomIterate,
    LastIterate,
    /// Smallest monitored gradient norm.
    BestGradientIterate,
}

#[derive(Clone, Debug)]
pub struct PageConfig {
    pub gamma: f64,
    pub p: f64,
    pub iterations: usize,
    pub seed: u64,
    pub output_rule: OutputRule,
    /// Monitoring period; `None` means `max(1, T / 500)`.
    pub monitor_every: Option<usize>,
}

impl PageConfig {
    pub fn new(gamma: f64, p: f64, iterations: usize, seed: u64) -> Self {
        Self {
            gamma,
            p,
            iterations,
            seed,
            output_rule: OutputRule::default(),
            monitor_every: None,
        }
    }

    pub fn monitor_period(&self) -> usize {
        self.monitor_every
            .unwrap_or((self.iterations / 500).max(1))
            .max(1)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(invalid(format!("stepsize {} must be positive", self.gamma)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(invalid(format!("probability {} outside (0, 1]", self.p)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Cumulative component-gradient evaluations, monitoring excluded.
    pub calls: u64,
    pub grad_norm_sq: f64,
    pub objective: f64,
    /// Whether `g` at this iterate came from a full-gradient refresh.
    pub refreshed: bool,
}

#[derive(Clone, Debug)]
pub struct Trace {
    /// Monitored iterates: `0`, every `monitor_period`, and `T`.
    pub records: Vec<TraceRecord>,
    pub final_point: Point,
    pub selected_point: Point,
    pub selected_iter: usize,
    /// `f(x^0) - f*`, with `f*` replaced by the best monitored value when
    /// the optimum is unknown.
    pub delta0: f64,
    pub total_calls: u64,
    pub refreshes: usize,
}

impl Trace {
    /// Calls spent when the monitored squared gradient norm first drops to
    /// `eps` or below.
    pub fn calls_to_reach(&self, eps: f64) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.grad_norm_sq <= eps)
            .map(|r| r.calls)
    }

    pub fn initial(&self) -> &TraceRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace has at least one record")
    }
}

/// State exposed to observers after each iteration.
#[derive(Debug)]
pub struct StepView<'a> {
    pub iter: usize,
    pub x: &'a [f64],
    pub g: &'a [f64],
    pub refreshed: bool,
    pub calls: u64,
}

/// Runs PAGE with `spec` as the sampling of gradient differences.
pub fn run_page(problem: &dyn Problem, spec: &SamplingSpec, cfg: &PageConfig) -> Result<Trace> {
    run_page_observed(problem, spec, cfg, |_| {})
}

pub fn run_page_observed<F>(
    problem: &dyn Problem,
    spec: &SamplingSpec,
    cfg: &PageConfig,
    observer: F,
) -> Result<Trace>
where
    F: FnMut(&StepView<'_>),
{
    if spec.n != problem.num_components() {
        return Err(Error::DimensionMismatch {
            expected: problem.num_components(),
            got: spec.n,
        });
    }
    let d = problem.dim();
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let step = |rng: &mut ChaCha8Rng, x: &[f64], y: &[f64], g: &mut [f64]| -> u64 {
        let draw = spec.draw(rng);
        for &(i, c) in &draw.terms {
            problem.component_grad_into(i, y, &mut gy);
            problem.component_grad_into(i, x, &mut gx);
            for k in 0..g.len() {
                g[k] += c * (gy[k] - gx[k]);
            }
        }
        2 * draw.raw_size as u64
    };
    run_loop(problem, problem.num_components() as u64, cfg, step, observer)
}

/// Runs the two-level method: an outer sampling over clients and, for each
/// selected client, an inner sampling over its items.
pub fn run_page_composed(
    problem: &GroupedProblem,
    outer: &SamplingSpec,
    inner: &[SamplingSpec],
    cfg: &PageConfig,
) -> Result<Trace> {
    run_page_composed_observed(problem, outer, inner, cfg, |_| {})
}

pub fn run_page_composed_observed<F>(
    problem: &GroupedProblem,
    outer: &SamplingSpec,
    inner: &[SamplingSpec],
    cfg: &PageConfig,
    observer: F,
) -> Result<Trace>
where
    F: FnMut(&StepView<'_>),
{
    let n = problem.num_clients();
    if outer.n != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: outer.n,
        });
    }
    if inner.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: inner.len(),
        });
    }
    if outer.b > 1.0 {
        return Err(invalid(format!("outer sampling has B = {} > 1", outer.b)));
    }
    for (i, s) in inner.iter().enumerate() {
        if s.n != problem.group(i).len() {
            return Err(invalid(format!(
                "inner sampling {i} covers {} items, client has {}",
                s.n,
                problem.group(i).len()
            )));
        }
    }
    let clients = problem.client_level();
    let d = problem.dim();
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let mut h = vec![0.0; d];
    let step = |rng: &mut ChaCha8Rng, x: &[f64], y: &[f64], g: &mut [f64]| -> u64 {
        let draw = outer.draw(rng);
        let mut calls = 0u64;
        for &(i, ci) in &draw.terms {
            if matches!(inner[i].kind, SamplingKind::FullBatch) {
                clients.component_grad_into(i, y, &mut gy);
                clients.component_grad_into(i, x, &mut gx);
                for k in 0..d {
                    h[k] = gy[k] - gx[k];
                }
                calls += 2 * problem.group(i).len() as u64;
            } else {
                let sub = inner[i].draw(rng);
                h.iter_mut().for_each(|v| *v = 0.0);
                for &(j, cj) in &sub.terms {
                    problem.item_grad_into(i, j, y, &mut gy);
                    problem.item_grad_into(i, j, x, &mut gx);
                    for k in 0..d {
                        h[k] += cj * (gy[k] - gx[k]);
                    }
                }
                calls += 2 * sub.raw_size as u64;
            }
            linalg::axpy(ci, &h, g);
        }
        calls
    };
    run_loop(&clients, problem.total_items() as u64, cfg, step, observer)
}

fn run_loop<S, F>(
    problem: &dyn Problem,
    refresh_cost: u64,
    cfg: &PageConfig,
    mut step: S,
    mut observer: F,
) -> Result<Trace>
where
    S: FnMut(&mut ChaCha8Rng, &[f64], &[f64], &mut [f64]) -> u64,
    F: FnMut(&StepView<'_>),
{
    cfg.validate()?;
    let d = problem.dim();
    let t_max = cfg.iterations;
    let period = cfg.monitor_period();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let selected_iter = match cfg.output_rule {
        OutputRule::UniformRandomIterate if t_max > 0 => rng.gen_range(0..t_max),
        _ => t_max,
    };

    let mut x = problem.initial_point();
    if x.len() != d || !linalg::all_finite(&x) {
        return Err(invalid("initial point has the wrong dimension or is not finite"));
    }
    let mut g = vec![0.0; d];
    problem.full_grad_into(&x, &mut g);
    let mut calls = refresh_cost;
    let mut refreshes = 0usize;

    let mut records = Vec::with_capacity(t_max / period + 2);
    let mut monitor_grad = vec![0.0; d];
    let f0 = problem.value_at(&x);
    if !f0.is_finite() || !linalg::all_finite(&g) {
        return Err(Error::Divergence { iteration: 0 });
    }
    records.push(TraceRecord {
        iter: 0,
        calls,
        grad_norm_sq: linalg::norm_sq(&g),
        objective: f0,
        refreshed: true,
    });
    observer(&StepView {
        iter: 0,
        x: &x,
        g: &g,
        refreshed: true,
        calls,
    });

    let mut selected = if selected_iter == 0 { Some(x.clone()) } else { None };
    let mut best = (records[0].grad_norm_sq, x.clone(), 0usize);
    let mut x_new = vec![0.0; d];
    for t in 0..t_max {
        if t == selected_iter {
            selected = Some(x.clone());
        }
        for k in 0..d {
            x_new[k] = x[k] - cfg.gamma * g[k];
        }
        if !linalg::all_finite(&x_new) {
            return Err(Error::Divergence { iteration: t + 1 });
        }
        let refreshed = rng.gen::<f64>() < cfg.p;
        if refreshed {
            problem.full_grad_into(&x_new, &mut g);
            calls += refresh_cost;
            refreshes += 1;
        } else {
            calls += step(&mut rng, &x, &x_new, &mut g);
        }
        std::mem::swap(&mut x, &mut x_new);
        if !linalg::all_finite(&g) {
            return Err(Error::Divergence { iteration: t + 1 });
        }
        observer(&StepView {
            iter: t + 1,
            x: &x,
            g: &g,
            refreshed,
            calls,
        });
        if (t + 1) % period == 0 || t + 1 == t_max {
            problem.full_grad_into(&x, &mut monitor_grad);
            let objective = problem.value_at(&x);
            let grad_norm_sq = linalg::norm_sq(&monitor_grad);
            if !objective.is_finite() || !grad_norm_sq.is_finite() {
                return Err(Error::Divergence { iteration: t + 1 });
            }
            if grad_norm_sq < best.0 {
                best = (grad_norm_sq, x.clone(), t + 1);
            }
            records.push(TraceRecord {
                iter: t + 1,
                calls,
                grad_norm_sq,
                objective,
                refreshed,
            });
        }
    }

    let f_star = problem.optimal_value().unwrap_or_else(|| {
        records
            .iter()
            .map(|r| r.objective)
            .fold(f64::INFINITY, f64::min)
    });
    let (selected_point, selected_iter) = match cfg.output_rule {
        OutputRule::UniformRandomIterate if t_max > 0 => {
            (selected.expect("selected iterate visited"), selected_iter)
        }
        OutputRule::BestGradientIterate => (best.1, best.2),
        _ => (x.clone(), t_max),
    };
    Ok(Trace {
        records,
        final_point: Point::from_vec_unchecked(x),
        selected_point: Point::from_vec_unchecked(selected_point),
        selected_iter,
        delta0: f0 - f_star,
        total_calls: calls,
        refreshes,
    })
}

/// Plain gradient descent from the problem's initial point, for reference.
pub fn gradient_descent(problem: &dyn Problem, gamma: f64, iterations: usize) -> Vec<Vec<f64>> {
    let d = problem.dim();
    let mut x = problem.initial_point();
    let mut g = vec![0.0; d];
    let mut path = vec![x.clone()];
    for _ in 0..iterations {
        problem.full_grad_into(&x, &mut g);
        for k in 0..d {
            x[k] -= gamma * g[k];
        }
        path.push(x.clone());
    }
    path
}
