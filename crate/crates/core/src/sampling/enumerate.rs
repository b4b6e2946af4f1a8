use itertools::Itertools;

use super::{apply_vectors, mean_vector, Draw, SamplingKind, SamplingSpec};
use crate::error::{Error, Result};
use crate::linalg;

/// Largest outcome space enumerated exactly.
pub const ENUMERATION_BUDGET: usize = 1_000_000;

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn outcome_count(spec: &SamplingSpec) -> f64 {
    match &spec.kind {
        SamplingKind::UniformWithReplacement { tau } | SamplingKind::Importance { tau, .. } => {
            (spec.n as f64).powi(*tau as i32)
        }
        SamplingKind::Nice { tau } => binomial(spec.n, *tau),
        SamplingKind::Independent { .. } => 2f64.powi(spec.n as i32),
        SamplingKind::ExtendedNice { l, tau } => binomial(l.iter().sum(), *tau),
        SamplingKind::FullBatch => 1.0,
    }
}

/// Every outcome of `spec` with its probability.
pub fn outcomes(spec: &SamplingSpec, budget: usize) -> Result<Vec<(f64, Draw)>> {
    let count = outcome_count(spec);
    if count > budget as f64 {
        return Err(Error::EnumerationBudget {
            outcomes: count,
            budget,
        });
    }
    let n = spec.n;
    let nf = n as f64;
    let out = match &spec.kind {
        SamplingKind::UniformWithReplacement { tau } => {
            let prob = nf.powi(-(*tau as i32));
            let c = 1.0 / *tau as f64;
            (0..*tau)
                .map(|_| 0..n)
                .multi_cartesian_product()
                .map(|seq| (prob, Draw::from_raw(seq.into_iter().map(|i| (i, c)).collect())))
                .collect()
        }
        SamplingKind::Importance { q, tau } => {
            let t = *tau as f64;
            (0..*tau)
                .map(|_| 0..n)
                .multi_cartesian_product()
                .map(|seq| {
                    let prob = seq.iter().map(|&i| q[i]).product();
                    let raw = seq.into_iter().map(|i| (i, 1.0 / (t * nf * q[i]))).collect();
                    (prob, Draw::from_raw(raw))
                })
                .collect()
        }
        SamplingKind::Nice { tau } => {
            let prob = 1.0 / count;
            let c = 1.0 / *tau as f64;
            (0..n)
                .combinations(*tau)
                .map(|set| (prob, Draw::from_raw(set.into_iter().map(|i| (i, c)).collect())))
                .collect()
        }
        SamplingKind::Independent { p } => (0u64..1 << n)
            .map(|mask| {
                let mut prob = 1.0;
                let mut terms = Vec::new();
                for (i, &pi) in p.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        prob *= pi;
                        terms.push((i, 1.0 / (nf * pi)));
                    } else {
                        prob *= 1.0 - pi;
                    }
                }
                let raw_size = terms.len();
                (prob, Draw { terms, raw_size })
            })
            .collect(),
        SamplingKind::ExtendedNice { l, tau } => {
            let big_n: usize = l.iter().sum();
            let owner: Vec<usize> = l
                .iter()
                .enumerate()
                .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
                .collect();
            let prob = 1.0 / count;
            let scale = big_n as f64 / (nf * *tau as f64);
            (0..big_n)
                .combinations(*tau)
                .map(|set| {
                    let raw = set
                        .into_iter()
                        .map(|k| (owner[k], scale / l[owner[k]] as f64))
                        .collect();
                    (prob, Draw::from_raw(raw))
                })
                .collect()
        }
        SamplingKind::FullBatch => vec![(
            1.0,
            Draw {
                terms: (0..n).map(|i| (i, 1.0 / nf)).collect(),
                raw_size: n,
            },
        )],
    };
    Ok(out)
}

/// Exact moments of a sampling on fixed vectors, by full enumeration.
#[derive(Clone, Debug)]
pub struct ExactVariance {
    /// `E |S(a) - mean(a)|^2`.
    pub variance: f64,
    pub rhs_bound: f64,
    /// `E S(a)`.
    pub mean: Vec<f64>,
    /// `|E S(a) - mean(a)|`.
    pub mean_err: f64,
    /// Expected number of distinct indices.
    pub expected_distinct: f64,
    pub outcomes: usize,
}

pub fn variance_exact(spec: &SamplingSpec, vectors: &[Vec<f64>]) -> Result<ExactVariance> {
    let rhs_bound = spec.rhs_bound(vectors)?;
    let all = outcomes(spec, ENUMERATION_BUDGET)?;
    let truth = mean_vector(vectors);
    let mut mean = vec![0.0; truth.len()];
    let mut variance = 0.0;
    let mut expected_distinct = 0.0;
    for (prob, draw) in &all {
        let est = apply_vectors(draw, vectors);
        linalg::axpy(*prob, &est, &mut mean);
        variance += prob * linalg::dist_sq(&est, &truth);
        expected_distinct += prob * draw.terms.len() as f64;
    }
    let mean_err = linalg::dist_sq(&mean, &truth).sqrt();
    Ok(ExactVariance {
        variance,
        rhs_bound,
        mean,
        mean_err,
        expected_distinct,
        outcomes: all.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_vectors() -> Vec<Vec<f64>> {
        vec![vec![1.0, 0.0], vec![0.0, 1.0]]
    }

    #[test]
    fn nice_singletons() {
        let s = SamplingSpec::nice(2, 1).unwrap();
        let v = variance_exact(&s, &unit_vectors()).unwrap();
        assert!((v.variance - 0.5).abs() < 1e-15);
        assert!((v.rhs_bound - 0.5).abs() < 1e-15);
    }

    #[test]
    fn importance_two_outcomes() {
        let s = SamplingSpec::importance(vec![0.75, 0.25], 1).unwrap();
        let all = outcomes(&s, 10).unwrap();
        assert_eq!(all.len(), 2);
        assert!((all[0].1.terms[0].1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((all[1].1.terms[0].1 - 2.0).abs() < 1e-15);
        let v = variance_exact(&s, &unit_vectors()).unwrap();
        assert!((v.variance - 5.0 / 6.0).abs() < 1e-15);
        assert!((v.rhs_bound - 5.0 / 6.0).abs() < 1e-15);
        assert!(v.mean_err < 1e-15);
    }

    #[test]
    fn independent_four_outcomes() {
        let s = SamplingSpec::independent(vec![0.5, 0.5]).unwrap();
        let all = outcomes(&s, 10).unwrap();
        assert_eq!(all.len(), 4);
        assert!(all.iter().all(|(p, _)| (*p - 0.25).abs() < 1e-15));
        let sets: Vec<Vec<(usize, f64)>> = all.into_iter().map(|o| o.1.terms).collect();
        assert!(sets.contains(&vec![]));
        assert!(sets.contains(&vec![(0, 1.0)]));
        assert!(sets.contains(&vec![(1, 1.0)]));
        assert!(sets.contains(&vec![(0, 1.0), (1, 1.0)]));
    }

    #[test]
    fn constant_vectors_have_no_variance() {
        let v = vec![vec![0.3, -1.2]; 4];
        for s in [
            SamplingSpec::uniform(4, 2).unwrap(),
            SamplingSpec::nice(4, 2).unwrap(),
            SamplingSpec::extended_nice(vec![2, 2, 2, 2], 3).unwrap(),
        ] {
            let e = variance_exact(&s, &v).unwrap();
            assert!(e.variance.abs() < 1e-15);
            assert!(e.rhs_bound.abs() < 1e-14);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let s = SamplingSpec::nice(60, 30).unwrap();
        assert!(matches!(
            outcomes(&s, ENUMERATION_BUDGET),
            Err(Error::EnumerationBudget { .. })
        ));
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(6, 6), 1.0);
    }
}
