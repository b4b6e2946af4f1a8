//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use pagesample_core::objective::{GroupedProblem, QuadraticProblem};
use pagesample_core::taskgen::{gen_controlled_lpm, stratify, StratifyRule};
use pagesample_core::Problem;

/// The quadratic benchmark task with `n` components in dimension 10.
pub fn quadratic(n: usize) -> QuadraticProblem {
    gen_controlled_lpm(n, 10, 0.001, 0.5, 1)
        .and_then(|t| t.problem())
        .expect("benchmark task")
}

/// [`quadratic`] split into `g` contiguous clients.
pub fn grouped(n: usize, g: usize) -> GroupedProblem {
    let base: Arc<dyn Problem> = Arc::new(quadratic(n));
    stratify(base, g, StratifyRule::Contiguous).expect("benchmark grouping")
}

/// `n` pseudo-random vectors in dimension `d`.
pub fn vectors(n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..d).map(|k| ((i * 31 + k * 17) % 97) as f64 / 97.0 - 0.5).collect())
        .collect()
}
