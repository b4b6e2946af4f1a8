//! Composition of an outer sampling over clients with per-client inner
//! samplings over their data.

use super::{outcomes, ExactVariance, SamplingSpec, ENUMERATION_BUDGET};
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::objective::WeightedConstants;

/// Variance constant entering the stepsize of the composed method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComposedVariance {
    pub effective: f64,
}

fn check_shapes(outer: &SamplingSpec, inner_len: usize) -> Result<()> {
    if inner_len != outer.n {
        return Err(Error::DimensionMismatch {
            expected: outer.n,
            got: inner_len,
        });
    }
    if outer.b > 1.0 {
        return Err(invalid(format!("outer sampling has B = {} > 1", outer.b)));
    }
    Ok(())
}

/// `(1/n) sum_i (A/(n w_i) + (1-B)/n) ((A_i-B_i) L_{i,+}^2 + B_i L_{i,+-}^2)
///  + (A-B) L_+^2 + B L_{+-}^2`.
pub fn compose_variance(
    outer: &SamplingSpec,
    inner: &[SamplingSpec],
    inner_constants: &[WeightedConstants],
    outer_constants: WeightedConstants,
) -> Result<ComposedVariance> {
    check_shapes(outer, inner.len())?;
    if inner_constants.len() != inner.len() {
        return Err(Error::DimensionMismatch {
            expected: inner.len(),
            got: inner_constants.len(),
        });
    }
    let n = outer.n as f64;
    let mut client_part = 0.0;
    for ((spec, c), &w) in inner.iter().zip(inner_constants).zip(&outer.weights) {
        let own = (spec.a - spec.b) * c.plus_sq + spec.b * c.pm_sq;
        if own == 0.0 {
            continue;
        }
        client_part += (outer.a / (n * w) + (1.0 - outer.b) / n) * own;
    }
    let effective = client_part / n
        + (outer.a - outer.b) * outer_constants.plus_sq
        + outer.b * outer_constants.pm_sq;
    Ok(ComposedVariance { effective })
}

/// Right-hand side of the composed variance inequality for fixed vectors
/// `vectors[i][j]`.
pub fn lemma3_rhs(
    outer: &SamplingSpec,
    inner: &[SamplingSpec],
    vectors: &[Vec<Vec<f64>>],
) -> Result<f64> {
    check_shapes(outer, inner.len())?;
    if vectors.len() != inner.len() {
        return Err(Error::DimensionMismatch {
            expected: inner.len(),
            got: vectors.len(),
        });
    }
    let n = outer.n as f64;
    let d = vectors[0].first().map_or(0, |v| v.len());
    let mut client_means = Vec::with_capacity(vectors.len());
    let mut client_part = 0.0;
    for ((spec, vs), &w) in inner.iter().zip(vectors).zip(&outer.weights) {
        if vs.len() != spec.n {
            return Err(Error::DimensionMismatch {
                expected: spec.n,
                got: vs.len(),
            });
        }
        let mean = super::mean_vector(vs);
        let own = spec.rhs_bound(vs)?;
        client_part += (outer.a / (n * w) + (1.0 - outer.b) / n) * own;
        client_means.push(mean);
    }
    let mut grand = vec![0.0; d];
    let mut weighted = 0.0;
    for (m, &w) in client_means.iter().zip(&outer.weights) {
        linalg::axpy(1.0 / n, m, &mut grand);
        let sq = linalg::norm_sq(m);
        if sq > 0.0 {
            weighted += sq / (n * w);
        }
    }
    Ok(client_part / n + outer.a / n * weighted - outer.b * linalg::norm_sq(&grand))
}

/// One joint outcome: probability and `(client, item, coefficient)` terms.
pub type ComposedOutcome = (f64, Vec<(usize, usize, f64)>);

/// Joint outcomes of the composed estimator as `(probability, terms)` with
/// terms `(client, item, coefficient)`. Inner samplings are drawn only for
/// clients present in the outer outcome.
pub fn composed_draw_outcomes(
    outer: &SamplingSpec,
    inner: &[SamplingSpec],
    budget: usize,
) -> Result<Vec<ComposedOutcome>> {
    check_shapes(outer, inner.len())?;
    let inner_outcomes = inner
        .iter()
        .map(|s| outcomes(s, budget))
        .collect::<Result<Vec<_>>>()?;
    let mut all = Vec::new();
    for (p_outer, draw) in outcomes(outer, budget)? {
        let mut partial: Vec<ComposedOutcome> = vec![(p_outer, Vec::new())];
        for &(i, ci) in &draw.terms {
            let mut next = Vec::with_capacity(partial.len() * inner_outcomes[i].len());
            for (pa, ta) in &partial {
                for (pb, db) in &inner_outcomes[i] {
                    let mut t = ta.clone();
                    t.extend(db.terms.iter().map(|&(j, cj)| (i, j, ci * cj)));
                    next.push((pa * pb, t));
                }
            }
            if all.len() + next.len() > budget {
                return Err(Error::EnumerationBudget {
                    outcomes: (all.len() + next.len()) as f64,
                    budget,
                });
            }
            partial = next;
        }
        all.extend(partial);
    }
    Ok(all)
}

/// Exact variance of the composed estimator, with the composed bound as
/// `rhs_bound`.
pub fn composed_variance_exact(
    outer: &SamplingSpec,
    inner: &[SamplingSpec],
    vectors: &[Vec<Vec<f64>>],
) -> Result<ExactVariance> {
    let rhs_bound = lemma3_rhs(outer, inner, vectors)?;
    let n = outer.n as f64;
    let d = vectors[0][0].len();
    let mut truth = vec![0.0; d];
    for vs in vectors {
        linalg::axpy(1.0 / n, &super::mean_vector(vs), &mut truth);
    }
    let all = composed_draw_outcomes(outer, inner, ENUMERATION_BUDGET)?;
    let mut mean = vec![0.0; d];
    let mut variance = 0.0;
    let mut expected_distinct = 0.0;
    let mut est = vec![0.0; d];
    for (prob, terms) in &all {
        est.iter_mut().for_each(|v| *v = 0.0);
        for &(i, j, c) in terms {
            linalg::axpy(c, &vectors[i][j], &mut est);
        }
        linalg::axpy(*prob, &est, &mut mean);
        variance += prob * linalg::dist_sq(&est, &truth);
        expected_distinct += prob * terms.len() as f64;
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
