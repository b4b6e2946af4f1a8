//! Two-class LIBSVM datasets, the nonconvex logistic-regression objective,
//! and client sharding.

mod libsvm;
mod logistic;

pub use libsvm::{parse_libsvm, read_libsvm, write_libsvm, SparseDataset};
pub use logistic::LogisticProblem;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::objective::GroupedProblem;

/// Regularization weight used by default for the logistic objective.
pub const DEFAULT_LAMBDA: f64 = 0.001;

/// Shuffles the rows uniformly and splits them into `clients` contiguous
/// shards whose sizes differ by at most one.
pub fn shard(data: &SparseDataset, lambda: f64, clients: usize, seed: u64) -> Result<GroupedProblem> {
    let n = data.n();
    if clients == 0 || clients > n {
        return Err(invalid(format!("cannot split {n} rows across {clients} clients")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = n / clients;
    let extra = n % clients;
    let mut groups = Vec::with_capacity(clients);
    let mut start = 0;
    for c in 0..clients {
        let size = base + usize::from(c < extra);
        groups.push(order[start..start + size].to_vec());
        start += size;
    }
    let problem = Arc::new(LogisticProblem::new(data, lambda)?);
    GroupedProblem::new(problem, groups)
}
