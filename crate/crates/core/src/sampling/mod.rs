//! Unbiased sampled estimators of a mean `(1/n) sum_i a_i`.
//!
//! Every [`SamplingSpec`] carries constants `(A, B, w)` for which
//!
//! ```text
//! E |S(a) - mean(a)|^2 <= (A/n) sum_i |a_i|^2 / (n w_i) - B |mean(a)|^2
//! ```
//!
//! holds, with equality for all kinds implemented here.

mod compose;
mod enumerate;

pub use compose::{
    compose_variance, composed_draw_outcomes, composed_variance_exact, lemma3_rhs, ComposedOutcome,
    ComposedVariance,
};
pub use enumerate::{outcomes, variance_exact, ExactVariance, ENUMERATION_BUDGET};

use std::collections::HashMap;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg;

#[derive(Clone, Debug, PartialEq)]
pub enum SamplingKind {
    /// `tau` i.i.d. uniform indices.
    UniformWithReplacement { tau: usize },
    /// `tau` i.i.d. indices drawn with probabilities `q`.
    Importance { q: Vec<f64>, tau: usize },
    /// Uniform subset of exactly `tau` distinct indices.
    Nice { tau: usize },
    /// Index `i` included independently with probability `p[i]`.
    Independent { p: Vec<f64> },
    /// Nice sampling of `tau` copies out of the multiset holding `l[i]`
    /// copies of index `i`.
    ExtendedNice { l: Vec<usize>, tau: usize },
    /// Every index, every time.
    FullBatch,
}

impl SamplingKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplingKind::UniformWithReplacement { .. } => "uniform",
            SamplingKind::Importance { .. } => "importance",
            SamplingKind::Nice { .. } => "nice",
            SamplingKind::Independent { .. } => "independent",
            SamplingKind::ExtendedNice { .. } => "extended-nice",
            SamplingKind::FullBatch => "full-batch",
        }
    }
}

/// A sampling with its certified constants.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingSpec {
    pub kind: SamplingKind,
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub weights: Vec<f64>,
    /// Expected number of distinct indices; `tau` for the kinds where only
    /// the bound `<= tau` is known.
    pub expected_cardinality: f64,
    /// Cumulative distribution for categorical draws (`Importance`) or
    /// prefix sums of copy counts (`ExtendedNice`).
    cumulative: Vec<f64>,
}

/// One realization of a sampling: `(index, coefficient)` pairs sorted by
/// index, with repeated indices merged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Draw {
    pub terms: Vec<(usize, f64)>,
    /// Number of indices in the raw draw before merging.
    pub raw_size: usize,
}

impl Draw {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn from_raw(mut raw: Vec<(usize, f64)>) -> Self {
        let raw_size = raw.len();
        raw.sort_by_key(|t| t.0);
        let mut terms: Vec<(usize, f64)> = Vec::with_capacity(raw.len());
        for (i, c) in raw {
            match terms.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => terms.push((i, c)),
            }
        }
        Draw { terms, raw_size }
    }
}

fn nice_factor(n: usize, tau: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        (n - tau) as f64 / (tau as f64 * (n - 1) as f64)
    }
}

fn check_tau(tau: usize, n: usize) -> Result<()> {
    if tau == 0 || tau > n {
        return Err(invalid(format!("batch size {tau} outside 1..={n}")));
    }
    Ok(())
}

fn cumulative(values: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

impl SamplingSpec {
    /// Builds a spec for `kind` over a ground set of size `n`.
    pub fn build(kind: SamplingKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("ground set is empty"));
        }
        let uniform = vec![1.0 / n as f64; n];
        let spec = match &kind {
            SamplingKind::UniformWithReplacement { tau } => {
                if *tau == 0 {
                    return Err(invalid("batch size must be positive"));
                }
                let a = 1.0 / *tau as f64;
                (a, a, uniform, *tau as f64, Vec::new())
            }
            SamplingKind::Importance { q, tau } => {
                if *tau == 0 {
                    return Err(invalid("batch size must be positive"));
                }
                if q.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: q.len(),
                    });
                }
                if q.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(invalid("importance probabilities must be positive"));
                }
                let total: f64 = q.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("importance probabilities sum to {total}")));
                }
                let a = 1.0 / *tau as f64;
                (a, a, q.clone(), *tau as f64, cumulative(q))
            }
            SamplingKind::Nice { tau } => {
                check_tau(*tau, n)?;
                let a = nice_factor(n, *tau);
                (a, a, uniform, *tau as f64, Vec::new())
            }
            SamplingKind::Independent { p } => {
                if p.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: p.len(),
                    });
                }
                if p.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                    return Err(invalid("inclusion probabilities must lie in (0, 1)"));
                }
                let odds: Vec<f64> = p.iter().map(|v| v / (1.0 - v)).collect();
                let total: f64 = odds.iter().sum();
                let w = odds.iter().map(|o| o / total).collect();
                (1.0 / total, 0.0, w, p.iter().sum(), Vec::new())
            }
            SamplingKind::ExtendedNice { l, tau } => {
                if l.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: l.len(),
                    });
                }
                if l.contains(&0) {
                    return Err(invalid("copy counts must be at least 1"));
                }
                let big_n: usize = l.iter().sum();
                check_tau(*tau, big_n)?;
                let a = nice_factor(big_n, *tau);
                let w = l.iter().map(|&v| v as f64 / big_n as f64).collect();
                let counts: Vec<f64> = l.iter().map(|&v| v as f64).collect();
                (a, a, w, *tau as f64, cumulative(&counts))
            }
            SamplingKind::FullBatch => (0.0, 0.0, uniform, n as f64, Vec::new()),
        };
        let (a, b, weights, expected_cardinality, cumulative) = spec;
        Ok(SamplingSpec {
            kind,
            n,
            a,
            b,
            weights,
            expected_cardinality,
            cumulative,
        })
    }

    pub fn uniform(n: usize, tau: usize) -> Result<Self> {
        Self::build(SamplingKind::UniformWithReplacement { tau }, n)
    }

    pub fn importance(q: Vec<f64>, tau: usize) -> Result<Self> {
        let n = q.len();
        Self::build(SamplingKind::Importance { q, tau }, n)
    }

    pub fn nice(n: usize, tau: usize) -> Result<Self> {
        Self::build(SamplingKind::Nice { tau }, n)
    }

    pub fn independent(p: Vec<f64>) -> Result<Self> {
        let n = p.len();
        Self::build(SamplingKind::Independent { p }, n)
    }

    pub fn extended_nice(l: Vec<usize>, tau: usize) -> Result<Self> {
        let n = l.len();
        Self::build(SamplingKind::ExtendedNice { l, tau }, n)
    }

    pub fn full_batch(n: usize) -> Result<Self> {
        Self::build(SamplingKind::FullBatch, n)
    }

    /// `(A, B, w, |S|)`, ignoring which kind produced them.
    pub fn constants(&self) -> (f64, f64, &[f64], f64) {
        (self.a, self.b, &self.weights, self.expected_cardinality)
    }

    /// Expected raw draw size, which drives gradient-call accounting.
    pub fn expected_raw_size(&self) -> f64 {
        self.expected_cardinality
    }

    /// Right-hand side of the weighted AB inequality for `vectors`.
    pub fn rhs_bound(&self, vectors: &[Vec<f64>]) -> Result<f64> {
        if vectors.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: vectors.len(),
            });
        }
        let n = self.n as f64;
        let mut weighted = 0.0;
        for (v, &w) in vectors.iter().zip(&self.weights) {
            let sq = linalg::norm_sq(v);
            if sq > 0.0 {
                weighted += sq / (n * w);
            }
        }
        let mean = mean_vector(vectors);
        Ok(self.a / n * weighted - self.b * linalg::norm_sq(&mean))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        let n = self.n;
        let nf = n as f64;
        match &self.kind {
            SamplingKind::UniformWithReplacement { tau } => {
                let c = 1.0 / *tau as f64;
                Draw::from_raw((0..*tau).map(|_| (rng.gen_range(0..n), c)).collect())
            }
            SamplingKind::Importance { q, tau } => {
                let t = *tau as f64;
                let raw = (0..*tau)
                    .map(|_| {
                        let i = self.categorical(rng);
                        (i, 1.0 / (t * nf * q[i]))
                    })
                    .collect();
                Draw::from_raw(raw)
            }
            SamplingKind::Nice { tau } => {
                let c = 1.0 / *tau as f64;
                let raw = partial_shuffle(n, *tau, rng).into_iter().map(|i| (i, c)).collect();
                Draw::from_raw(raw)
            }
            SamplingKind::Independent { p } => {
                let mut terms = Vec::new();
                for (i, &pi) in p.iter().enumerate() {
                    if rng.gen::<f64>() < pi {
                        terms.push((i, 1.0 / (nf * pi)));
                    }
                }
                let raw_size = terms.len();
                Draw { terms, raw_size }
            }
            SamplingKind::ExtendedNice { l, tau } => {
                let big_n: usize = l.iter().sum();
                let scale = big_n as f64 / (nf * *tau as f64);
                let raw = partial_shuffle(big_n, *tau, rng)
                    .into_iter()
                    .map(|copy| {
                        let i = self.owner_of_copy(copy);
                        (i, scale / l[i] as f64)
                    })
                    .collect();
                Draw::from_raw(raw)
            }
            SamplingKind::FullBatch => Draw {
                terms: (0..n).map(|i| (i, 1.0 / nf)).collect(),
                raw_size: n,
            },
        }
    }

    fn categorical<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let k = self.cumulative.partition_point(|&c| c <= u);
        k.min(self.n - 1)
    }

    /// Original index owning copy `copy` of the expanded multiset.
    fn owner_of_copy(&self, copy: usize) -> usize {
        let c = copy as f64;
        self.cumulative.partition_point(|&s| s <= c)
    }
}

/// First `k` entries of a uniformly random permutation of `0..n`.
///
/// Uses a sparse swap table when `k` is small relative to `n`, so the cost
/// is `O(k)` either way; both paths consume the rng identically.
fn partial_shuffle<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    if k * 4 >= n {
        let mut perm: Vec<usize> = (0..n).collect();
        for j in 0..k {
            let r = rng.gen_range(j..n);
            perm.swap(j, r);
            out.push(perm[j]);
        }
    } else {
        let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(2 * k);
        for j in 0..k {
            let r = rng.gen_range(j..n);
            let at_r = *swapped.get(&r).unwrap_or(&r);
            let at_j = *swapped.get(&j).unwrap_or(&j);
            swapped.insert(r, at_j);
            out.push(at_r);
        }
    }
    out
}

/// `(1/n) sum_i a_i`, accumulated as `sum_i (1/n) a_i` in index order so that
/// it matches a full-batch draw bitwise.
pub fn mean_vector(vectors: &[Vec<f64>]) -> Vec<f64> {
    let d = vectors.first().map_or(0, |v| v.len());
    let c = 1.0 / vectors.len() as f64;
    let mut m = vec![0.0; d];
    for v in vectors {
        linalg::axpy(c, v, &mut m);
    }
    m
}

/// `sum coefficient * oracle(index)`, evaluating each referenced index once.
pub fn apply<F>(draw: &Draw, dim: usize, mut oracle: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, &mut [f64]) -> Result<()>,
{
    let mut out = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for &(i, c) in &draw.terms {
        oracle(i, &mut buf)?;
        linalg::axpy(c, &buf, &mut out);
    }
    Ok(out)
}

/// [`apply`] over a fixed list of vectors.
pub fn apply_vectors(draw: &Draw, vectors: &[Vec<f64>]) -> Vec<f64> {
    let d = vectors.first().map_or(0, |v| v.len());
    let mut out = vec![0.0; d];
    for &(i, c) in &draw.terms {
        linalg::axpy(c, &vectors[i], &mut out);
    }
    out
}

/// Monte-Carlo summary of a sampling on fixed vectors.
#[derive(Clone, Debug)]
pub struct McVariance {
    /// `|mean of draws - true mean|`.
    pub mean_err: f64,
    /// Largest coordinate-wise `|mean of draws - true mean| / SE`.
    pub mean_z_max: f64,
    pub variance_est: f64,
    /// Standard error of `variance_est`.
    pub std_err: f64,
    pub rhs_bound: f64,
    /// `variance_est > rhs_bound + 4 SE`.
    pub violation: bool,
}

pub fn variance_mc<R: Rng + ?Sized>(
    spec: &SamplingSpec,
    vectors: &[Vec<f64>],
    trials: usize,
    rng: &mut R,
) -> Result<McVariance> {
    if trials < 2 {
        return Err(invalid("need at least two trials"));
    }
    let rhs_bound = spec.rhs_bound(vectors)?;
    let truth = mean_vector(vectors);
    let d = truth.len();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut err_sum = 0.0;
    let mut err_sq_sum = 0.0;
    for _ in 0..trials {
        let est = apply_vectors(&spec.draw(rng), vectors);
        let mut e = 0.0;
        for k in 0..d {
            let dev = est[k] - truth[k];
            sum[k] += dev;
            sum_sq[k] += dev * dev;
            e += dev * dev;
        }
        err_sum += e;
        err_sq_sum += e * e;
    }
    let t = trials as f64;
    let mut mean_err_sq = 0.0;
    let mut mean_z_max: f64 = 0.0;
    for k in 0..d {
        let m = sum[k] / t;
        mean_err_sq += m * m;
        let var = ((sum_sq[k] / t - m * m) * t / (t - 1.0)).max(0.0);
        let se = (var / t).sqrt();
        if se > 0.0 {
            mean_z_max = mean_z_max.max(m.abs() / se);
        } else if m != 0.0 {
            mean_z_max = f64::INFINITY;
        }
    }
    let variance_est = err_sum / t;
    let spread = ((err_sq_sum / t - variance_est * variance_est) * t / (t - 1.0)).max(0.0);
    let std_err = (spread / t).sqrt();
    Ok(McVariance {
        mean_err: mean_err_sq.sqrt(),
        mean_z_max,
        variance_est,
        std_err,
        rhs_bound,
        violation: variance_est > rhs_bound + 4.0 * std_err,
    })
}

/// Importance weights `q_i = L_i / sum L` minimizing `L_{+,w}`.
pub fn optimal_importance_weights(l: &[f64]) -> Result<Vec<f64>> {
    if l.is_empty() {
        return Err(invalid("no constants"));
    }
    if l.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(invalid("constants must be positive"));
    }
    let total: f64 = l.iter().sum();
    Ok(l.iter().map(|v| v / total).collect())
}
