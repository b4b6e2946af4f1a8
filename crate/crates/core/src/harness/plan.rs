use std::sync::Arc;

use serde::Serialize;

use super::config::{ExperimentConfig, Method, ProblemSource};
use crate::data::{self, LogisticProblem};
use crate::error::{invalid, Error, Result};
use crate::objective::{
    best_weighted_constants, GroupedProblem, Problem, ProblemKind, SmoothnessReport,
    WeightedConstants,
};
use crate::page::{
    default_p, expected_calls, iteration_budget, stepsize_nonconvex, stepsize_pl,
    stepsize_vanilla,
};
use crate::sampling::{compose_variance, optimal_importance_weights, ComposedVariance, SamplingSpec};
use crate::taskgen::{
    example_fixture, gen_controlled_li, gen_controlled_lpm, read_task, ExampleFixture,
    ExampleParams, TaskKind,
};

/// Largest inclusion probability handed to independent sampling, which
/// needs `p_i < 1`.
const MAX_INCLUSION: f64 = 1.0 - 1e-6;

/// A problem ready to run, with what is known about its optimum.
#[derive(Clone)]
pub struct LoadedProblem {
    /// The objective; the client-level view for grouped problems.
    pub problem: Arc<dyn Problem>,
    /// Present when the run uses the two-level method.
    pub grouped: Option<GroupedProblem>,
    /// Analytic example the problem came from, if any.
    pub example: Option<ExampleFixture>,
    /// Known `f*`, or a certified lower bound on it.
    pub f_lower: Option<f64>,
    /// Smallest eigenvalue of the mean Hessian, for quadratics.
    pub mu: Option<f64>,
}

impl std::fmt::Debug for LoadedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedProblem")
            .field("kind", &self.problem.kind())
            .field("n", &self.problem.num_components())
            .field("dim", &self.problem.dim())
            .field("grouped", &self.grouped.is_some())
            .finish()
    }
}

impl LoadedProblem {
    pub fn flat(problem: Arc<dyn Problem>) -> Self {
        let f_lower = problem.optimal_value().or(match problem.kind() {
            // both the cross-entropy and the penalty are nonnegative
            ProblemKind::Logistic => Some(0.0),
            _ => None,
        });
        Self {
            problem,
            grouped: None,
            example: None,
            f_lower,
            mu: None,
        }
    }

    pub fn grouped(grouped: GroupedProblem) -> Self {
        let level: Arc<dyn Problem> = Arc::new(grouped.client_level());
        let base_kind = grouped.base().kind();
        let f_lower = level.optimal_value().or(match base_kind {
            ProblemKind::Logistic => Some(0.0),
            _ => None,
        });
        Self {
            problem: level,
            grouped: Some(grouped),
            example: None,
            f_lower,
            mu: None,
        }
    }

    /// `f(x^0) - f_lower`.
    pub fn delta0(&self) -> Option<f64> {
        let x0 = self.problem.initial_point();
        self.f_lower.map(|lo| self.problem.value_at(&x0) - lo)
    }
}

pub fn load_problem(source: &ProblemSource) -> Result<LoadedProblem> {
    match source {
        ProblemSource::Generator(g) => {
            let task = match TaskKind::parse(&g.kind)? {
                TaskKind::ControlledLpm => gen_controlled_lpm(g.n, g.d, g.lambda, g.s, g.seed)?,
                TaskKind::ControlledLi => gen_controlled_li(g.n, g.d, g.s, g.seed)?,
            };
            quadratic(task.problem()?)
        }
        ProblemSource::Task(t) => quadratic(read_task(&t.path)?.problem()?),
        ProblemSource::Dataset(d) => {
            let rows = data::read_libsvm(&d.path)?;
            match d.clients {
                Some(c) => Ok(LoadedProblem::grouped(data::shard(&rows, d.lambda, c, d.shard_seed)?)),
                None => Ok(LoadedProblem::flat(Arc::new(LogisticProblem::new(&rows, d.lambda)?))),
            }
        }
        ProblemSource::Example(e) => {
            let params = match e.which {
                1 => ExampleParams::Opposed { n: e.n, a: e.a, b: e.b },
                2 => ExampleParams::Single { n: e.n, b: e.b },
                3 => ExampleParams::Groups { b1: e.b1, g: e.g, m: e.m },
                k => return Err(Error::Config(format!("no example {k}"))),
            };
            let fixture = example_fixture(params)?;
            let mut loaded = LoadedProblem::flat(fixture.problem.clone());
            // every example is a nonnegative multiple of x^2 / 2 on average
            loaded.f_lower = Some(0.0);
            loaded.example = Some(fixture);
            Ok(loaded)
        }
    }
}

fn quadratic(p: crate::objective::QuadraticProblem) -> Result<LoadedProblem> {
    let mu = p.mean_min_eigenvalue();
    let mut loaded = LoadedProblem::flat(Arc::new(p));
    loaded.mu = Some(mu);
    Ok(loaded)
}

/// Sampling used by `method` over `n` components with constants `l`.
pub fn sampling_for(method: Method, l: &[f64], tau: usize) -> Result<SamplingSpec> {
    let n = l.len();
    match method {
        Method::Vanilla | Method::Uniform => SamplingSpec::uniform(n, tau),
        Method::Importance => SamplingSpec::importance(optimal_importance_weights(l)?, tau),
        Method::Nice => SamplingSpec::nice(n, tau.min(n)),
        Method::Independent => {
            let total: f64 = l.iter().sum();
            let p = if total > 0.0 {
                l.iter()
                    .map(|v| (tau as f64 * v / total).clamp(f64::MIN_POSITIVE, MAX_INCLUSION))
                    .collect()
            } else {
                vec![(tau as f64 / n as f64).min(MAX_INCLUSION); n]
            };
            SamplingSpec::independent(p)
        }
        Method::FullBatch => SamplingSpec::full_batch(n),
    }
}

/// Constants entering the stepsize of `method` with sampling `spec`. The
/// original analysis has no Hessian-variance term, so `vanilla` reports
/// `L_+^2` in both slots.
pub fn method_constants(
    method: Method,
    problem: &dyn Problem,
    report: &SmoothnessReport,
    spec: &SamplingSpec,
) -> Result<WeightedConstants> {
    let c = best_weighted_constants(problem, report, &spec.weights)?;
    Ok(match method {
        Method::Vanilla => WeightedConstants {
            plus_sq: c.plus_sq,
            pm_sq: c.plus_sq,
        },
        _ => c,
    })
}

/// Everything a run needs, fixed before the first seed starts.
#[derive(Clone, Debug)]
pub struct Plan {
    pub method: Method,
    /// Sampling over components, or over clients for grouped problems.
    pub spec: SamplingSpec,
    pub inner: Option<Vec<SamplingSpec>>,
    pub summary: PlanSummary,
}

/// Audit record of the derived parameters.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PlanSummary {
    pub method: String,
    pub sampling: String,
    pub inner_sampling: Option<String>,
    /// Components (or clients) the outer sampling ranges over.
    pub n: usize,
    /// Gradient calls of one full refresh.
    pub refresh_cost: usize,
    pub l_minus: f64,
    pub plus_sq: f64,
    pub pm_sq: f64,
    /// `(A - B) L_+^2 + B L_+-^2`, or the composed constant.
    pub variance_term: f64,
    pub a: f64,
    pub b: f64,
    /// Expected gradient evaluations per sampled step, per point.
    pub cardinality: f64,
    pub gamma: f64,
    pub gamma_theoretical: Option<f64>,
    pub p: f64,
    pub iterations: usize,
    pub delta0: Option<f64>,
    pub epsilon: Option<f64>,
    pub mu: Option<f64>,
    /// `n + T (p n + 2 (1 - p) |S|)`.
    pub predicted_calls: f64,
}

/// Derives sampling, stepsize, probability and budget for `cfg`.
pub fn plan(cfg: &ExperimentConfig, loaded: &LoadedProblem) -> Result<Plan> {
    let method = cfg.method.name;
    let tau = cfg.method.tau;
    let sched = &cfg.schedule;
    let report = loaded.problem.smoothness()?;
    let l_minus = report.l_minus;

    let (spec, inner, consts, variance_term, cardinality, refresh_cost) = match &loaded.grouped {
        None => {
            let spec = sampling_for(method, &report.l_i, tau)?;
            let c = method_constants(method, loaded.problem.as_ref(), &report, &spec)?;
            let v = if method == Method::Vanilla {
                c.plus_sq / tau as f64
            } else {
                ((spec.a - spec.b) * c.plus_sq + spec.b * c.pm_sq).max(0.0)
            };
            let card = spec.expected_raw_size();
            let n = spec.n;
            (spec, None, c, v, card, n)
        }
        Some(grouped) => {
            let (outer, inner, c, composed) = composed_setup(cfg, grouped, &report)?;
            let card = outer.expected_raw_size()
                * inner
                    .iter()
                    .zip(&outer.weights)
                    .map(|(s, w)| w * s.expected_raw_size())
                    .sum::<f64>();
            (outer, Some(inner), c, composed.effective, card, grouped.total_items())
        }
    };

    let p = sched.p.unwrap_or_else(|| default_p(cardinality, refresh_cost));
    let mu = sched.mu.or(loaded.mu);
    let gamma_theoretical = if sched.pl {
        let mu = mu.ok_or_else(|| {
            Error::Config("the PL stepsize needs `mu` for non-quadratic problems".into())
        })?;
        // A = 1, B = 0 turns the bracket into exactly `variance_term`
        Some(stepsize_pl(l_minus, 1.0, 0.0, variance_term, 0.0, p, mu)?)
    } else if method == Method::Vanilla && inner.is_none() {
        Some(stepsize_vanilla(l_minus, consts.plus_sq, tau as f64, p)?)
    } else {
        Some(stepsize_nonconvex(l_minus, 1.0, 0.0, variance_term, 0.0, p)?)
    };
    let gamma = match sched.gamma {
        Some(g) => g,
        None => gamma_theoretical.expect("theoretical stepsize computed above"),
    };

    let delta0 = sched.delta0.or_else(|| loaded.delta0());
    let mut iterations = match (sched.iterations, sched.epsilon) {
        (Some(t), _) => t,
        (None, Some(eps)) => {
            let d0 = delta0.ok_or_else(|| {
                Error::Config("deriving T from epsilon needs delta0 for this problem".into())
            })?;
            if d0 <= 0.0 {
                return Err(invalid("initial point is already optimal"));
            }
            iteration_budget(d0, eps, gamma)?
        }
        (None, None) => return Err(Error::Config("schedule needs iterations or epsilon".into())),
    };
    if let Some(cap) = sched.max_iterations {
        iterations = iterations.min(cap);
    }

    let summary = PlanSummary {
        method: method.name().to_string(),
        sampling: spec.kind.name().to_string(),
        inner_sampling: inner.as_ref().map(|v| v[0].kind.name().to_string()),
        n: spec.n,
        refresh_cost,
        l_minus,
        plus_sq: consts.plus_sq,
        pm_sq: consts.pm_sq,
        variance_term,
        a: spec.a,
        b: spec.b,
        cardinality,
        gamma,
        gamma_theoretical,
        p,
        iterations,
        delta0,
        epsilon: sched.epsilon,
        mu,
        predicted_calls: expected_calls(refresh_cost, p, cardinality, iterations),
    };
    Ok(Plan {
        method,
        spec,
        inner,
        summary,
    })
}

/// Outer and inner samplings of the two-level method and the composed
/// variance constant. The outer constants are reported.
fn composed_setup(
    cfg: &ExperimentConfig,
    grouped: &GroupedProblem,
    report: &SmoothnessReport,
) -> Result<(SamplingSpec, Vec<SamplingSpec>, WeightedConstants, ComposedVariance)> {
    let method = cfg.method.name;
    let level = grouped.client_level();
    let outer = sampling_for(method, &report.l_i, cfg.method.tau)?;
    let outer_c = method_constants(method, &level, report, &outer)?;
    let inner_method = if method == Method::Vanilla {
        Method::Vanilla
    } else {
        cfg.method.inner
    };
    let mut inner = Vec::with_capacity(grouped.num_clients());
    let mut inner_c = Vec::with_capacity(grouped.num_clients());
    for i in 0..grouped.num_clients() {
        let client = grouped.client_problem(i);
        let rep = client.smoothness()?;
        let spec = sampling_for(inner_method, &rep.l_i, cfg.method.tau_points)?;
        inner_c.push(method_constants(inner_method, &client, &rep, &spec)?);
        inner.push(spec);
    }
    let composed = compose_variance(&outer, &inner, &inner_c, outer_c)?;
    Ok((outer, inner, outer_c, composed))
}
