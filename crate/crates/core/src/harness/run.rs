use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::plan::{load_problem, plan, LoadedProblem, Plan};
use crate::error::{Error, Result};
use crate::page::{run_page, run_page_composed, PageConfig, Trace, TraceRecord};

/// One row of a per-seed trace file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub iter: usize,
    pub calls: u64,
    pub grad_norm_sq: f64,
    pub objective: f64,
    pub refreshed: bool,
}

impl From<&TraceRecord> for CsvRecord {
    fn from(r: &TraceRecord) -> Self {
        Self {
            iter: r.iter,
            calls: r.calls,
            grad_norm_sq: r.grad_norm_sq,
            objective: r.objective,
            refreshed: r.refreshed,
        }
    }
}

/// Median and quartiles of the squared gradient norm at a call budget,
/// over the seeds whose traces reach that budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub calls: u64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub seeds: usize,
}

pub const AGGREGATE_POINTS: usize = 200;

pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &trace.records {
        w.serialize(CsvRecord::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<CsvRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<CsvRecord>, _>>()?;
    Ok(rows)
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<AggregateRow>, _>>()?;
    Ok(rows)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Statistics of the latest monitored value at or below each budget on an
/// evenly spaced grid of `points` budgets. A seed stops contributing once
/// the budget passes its last record.
pub fn aggregate(traces: &[&Trace], points: usize) -> Vec<AggregateRow> {
    if traces.is_empty() || points == 0 {
        return Vec::new();
    }
    let start = traces.iter().map(|t| t.initial().calls).min().unwrap();
    let end = traces.iter().map(|t| t.last().calls).max().unwrap();
    let mut budgets: Vec<u64> = (0..points)
        .map(|k| {
            if points == 1 {
                end
            } else {
                start + ((end - start) as f64 * k as f64 / (points - 1) as f64).round() as u64
            }
        })
        .collect();
    budgets.dedup();
    let mut cursors = vec![0usize; traces.len()];
    let mut rows = Vec::with_capacity(budgets.len());
    for b in budgets {
        let mut vals = Vec::with_capacity(traces.len());
        for (t, cur) in traces.iter().zip(cursors.iter_mut()) {
            if t.last().calls < b {
                continue;
            }
            while *cur + 1 < t.records.len() && t.records[*cur + 1].calls <= b {
                *cur += 1;
            }
            if t.records[*cur].calls <= b {
                vals.push(t.records[*cur].grad_norm_sq);
            }
        }
        if vals.is_empty() {
            continue;
        }
        vals.sort_by(f64::total_cmp);
        rows.push(AggregateRow {
            calls: b,
            median: quantile(&vals, 0.5),
            q25: quantile(&vals, 0.25),
            q75: quantile(&vals, 0.75),
            seeds: vals.len(),
        });
    }
    rows
}

/// Traces of one config, one per seed, in seed order.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub plan: Plan,
    pub traces: Vec<(u64, Trace)>,
}

impl RunOutcome {
    /// Calls to reach `eps` per seed; `None` where it was never reached.
    pub fn calls_to_reach(&self, eps: f64) -> Vec<Option<u64>> {
        self.traces.iter().map(|(_, t)| t.calls_to_reach(eps)).collect()
    }
}

pub(crate) fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every seed of `cfg` on an already loaded problem.
pub fn run_loaded(cfg: &ExperimentConfig, loaded: &LoadedProblem) -> Result<RunOutcome> {
    cfg.validate()?;
    let plan = plan(cfg, loaded)?;
    let base = PageConfig {
        gamma: plan.summary.gamma,
        p: plan.summary.p,
        iterations: plan.summary.iterations,
        seed: 0,
        output_rule: cfg.schedule.output.into(),
        monitor_every: cfg.schedule.monitor_every,
    };
    let traces = with_workers(cfg.workers, || {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let pc = PageConfig { seed, ..base.clone() };
                let trace = match (&loaded.grouped, &plan.inner) {
                    (Some(g), Some(inner)) => run_page_composed(g, &plan.spec, inner, &pc)?,
                    _ => run_page(loaded.problem.as_ref(), &plan.spec, &pc)?,
                };
                Ok((seed, trace))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(RunOutcome { plan, traces })
}

/// Loads the configured problem and runs every seed. With a reseeded
/// generator each seed gets its own task; the reported plan is the first
/// seed's.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    match &cfg.generator {
        Some(g) if g.reseed => {
            let per_seed = with_workers(cfg.workers, || {
                cfg.seeds
                    .par_iter()
                    .map(|&seed| {
                        let mut one = cfg.clone();
                        one.seeds = vec![seed];
                        one.workers = None;
                        if let Some(g) = one.generator.as_mut() {
                            g.seed = seed;
                        }
                        let loaded = load_problem(&one.source()?)?;
                        run_loaded(&one, &loaded)
                    })
                    .collect::<Result<Vec<_>>>()
            })??;
            let plan = per_seed[0].plan.clone();
            let traces = per_seed.into_iter().flat_map(|o| o.traces).collect();
            Ok(RunOutcome { plan, traces })
        }
        _ => {
            let loaded = load_problem(&cfg.source()?)?;
            run_loaded(cfg, &loaded)
        }
    }
}

/// Writes `seed_<k>.csv` per seed, `aggregate.csv` and `plan.toml` into
/// `dir`, plus `chart.svg` when requested.
pub fn write_outcome(dir: &Path, outcome: &RunOutcome, chart: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (seed, trace) in &outcome.traces {
        write_trace_csv(&dir.join(format!("seed_{seed}.csv")), trace)?;
    }
    let refs: Vec<&Trace> = outcome.traces.iter().map(|(_, t)| t).collect();
    let agg = aggregate(&refs, AGGREGATE_POINTS);
    write_aggregate_csv(&dir.join("aggregate.csv"), &agg)?;
    let summary = toml::to_string(&outcome.plan.summary).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join("plan.toml"), summary)?;
    if chart {
        let series = vec![(
            outcome.plan.summary.method.clone(),
            agg.iter().map(|r| (r.calls as f64, r.median)).collect(),
        )];
        super::chart::write_svg(&dir.join("chart.svg"), "median squared gradient norm", &series)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::Point;

    fn trace(points: &[(u64, f64)]) -> Trace {
        Trace {
            records: points
                .iter()
                .enumerate()
                .map(|(k, &(calls, g))| TraceRecord {
                    iter: k,
                    calls,
                    grad_norm_sq: g,
                    objective: 0.0,
                    refreshed: false,
                })
                .collect(),
            final_point: Point::zeros(1),
            selected_point: Point::zeros(1),
            selected_iter: 0,
            delta0: 1.0,
            total_calls: points.last().unwrap().0,
            refreshes: 0,
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn aggregate_takes_latest_value_per_budget() {
        let a = trace(&[(10, 8.0), (20, 4.0), (30, 2.0)]);
        let b = trace(&[(10, 6.0), (30, 1.0)]);
        let rows = aggregate(&[&a, &b], 3);
        assert_eq!(rows.iter().map(|r| r.calls).collect::<Vec<_>>(), [10, 20, 30]);
        assert_eq!(rows[0].median, 7.0);
        assert_eq!(rows[1].median, 5.0);
        assert_eq!(rows[2].median, 1.5);
        let short = trace(&[(10, 3.0)]);
        let rows = aggregate(&[&a, &short], 3);
        assert_eq!(rows[2].seeds, 1);
    }
}
