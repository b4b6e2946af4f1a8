use std::sync::Arc;

use nalgebra::DMatrix;

use super::{Problem, ProblemKind, SmoothnessMethod, SmoothnessReport};
use crate::error::{invalid, Result};
use crate::linalg;

/// Two-level problem `f(x) = (1/n) sum_i (1/m_i) sum_j f_ij(x)`.
///
/// Item `f_ij` is component `groups[i][j]` of the base problem.
#[derive(Clone)]
pub struct GroupedProblem {
    base: Arc<dyn Problem>,
    groups: Arc<Vec<Vec<usize>>>,
    partition: bool,
}

impl std::fmt::Debug for GroupedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GroupedProblem")
            .field("base_kind", &self.base.kind())
            .field("group_sizes", &self.group_sizes())
            .finish()
    }
}

impl GroupedProblem {
    pub fn new(base: Arc<dyn Problem>, groups: Vec<Vec<usize>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(invalid("grouped problem needs at least one group"));
        }
        let n = base.num_components();
        let mut seen = vec![0usize; n];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(invalid(format!("group {g} is empty")));
            }
            for &idx in members {
                if idx >= n {
                    return Err(invalid(format!(
                        "group {g} references component {idx}, base has {n}"
                    )));
                }
                seen[idx] += 1;
            }
        }
        let equal = groups.iter().all(|g| g.len() == groups[0].len());
        let partition = equal && seen.iter().all(|&c| c == 1);
        Ok(Self {
            base,
            groups: Arc::new(groups),
            partition,
        })
    }

    pub fn base(&self) -> &Arc<dyn Problem> {
        &self.base
    }

    pub fn num_clients(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.len()).collect()
    }

    pub fn total_items(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Writes `grad f_ij(x)` into `out`.
    pub fn item_grad_into(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) {
        self.base.component_grad_into(self.groups[i][j], x, out);
    }

    /// Single-level problem whose components are the client objectives `f_i`.
    pub fn client_level(&self) -> ClientLevel {
        ClientLevel(self.clone())
    }

    /// Single-level problem over all items, reweighted so that its mean is `f`.
    pub fn flatten(&self) -> Flattened {
        Flattened::new(self.clone())
    }

    /// The items of client `i` as a standalone problem.
    pub fn client_problem(&self, i: usize) -> Subset {
        Subset::new(self.base.clone(), self.groups[i].clone())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.client_level().value_at(x)
    }

    pub fn full_grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.client_level().full_grad_into(x, out)
    }

    /// Client-level constants together with the per-item constants `L_ij`.
    pub fn smoothness(&self) -> Result<SmoothnessReport> {
        self.client_level().smoothness()
    }
}

/// Components of a base problem restricted to `indices`.
#[derive(Clone)]
pub struct Subset {
    base: Arc<dyn Problem>,
    indices: Vec<usize>,
}

impl Subset {
    pub fn new(base: Arc<dyn Problem>, indices: Vec<usize>) -> Self {
        Self { base, indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

impl Problem for Subset {
    fn num_components(&self) -> usize {
        self.indices.len()
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn kind(&self) -> ProblemKind {
        ProblemKind::Subset
    }

    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        self.base.component_value_unchecked(self.indices[i], x)
    }

    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.base.component_grad_into(self.indices[i], x, out)
    }

    fn smoothness(&self) -> Result<SmoothnessReport> {
        let base = self.base.smoothness()?;
        let l_i: Vec<f64> = self.indices.iter().map(|&k| base.l_i[k]).collect();
        let m = self.indices.len() as f64;
        let terms: Vec<(usize, f64)> = self.indices.iter().map(|&k| (k, 1.0 / m)).collect();
        let (l_minus, method) = match self.base.weighted_lipschitz(&terms) {
            Some(v) => (v, base.method),
            None => (l_i.iter().sum::<f64>() / m, SmoothnessMethod::UpperBound),
        };
        Ok(SmoothnessReport {
            l_minus,
            l_i,
            l_ij: None,
            method,
        })
    }

    fn weighted_lipschitz(&self, terms: &[(usize, f64)]) -> Option<f64> {
        let mapped: Vec<(usize, f64)> = terms.iter().map(|&(k, w)| (self.indices[k], w)).collect();
        self.base.weighted_lipschitz(&mapped)
    }

    fn component_hessian(&self, i: usize) -> Option<DMatrix<f64>> {
        self.base.component_hessian(self.indices[i])
    }

    fn initial_point(&self) -> Vec<f64> {
        self.base.initial_point()
    }
}

/// Client objectives `f_i = (1/m_i) sum_j f_ij` as components.
#[derive(Clone, Debug)]
pub struct ClientLevel(GroupedProblem);

impl ClientLevel {
    pub fn grouped(&self) -> &GroupedProblem {
        &self.0
    }
}

impl Problem for ClientLevel {
    fn num_components(&self) -> usize {
        self.0.num_clients()
    }

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn kind(&self) -> ProblemKind {
        ProblemKind::ClientLevel
    }

    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let g = self.0.group(i);
        let total: f64 = g
            .iter()
            .map(|&k| self.0.base.component_value_unchecked(k, x))
            .sum();
        total / g.len() as f64
    }

    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let g = self.0.group(i);
        let mut buf = vec![0.0; out.len()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for &k in g {
            self.0.base.component_grad_into(k, x, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        linalg::scale(1.0 / g.len() as f64, out);
    }

    fn smoothness(&self) -> Result<SmoothnessReport> {
        let base = self.0.base.smoothness()?;
        let n = self.0.num_clients() as f64;
        let mut method = base.method;
        let mut l_i = Vec::with_capacity(self.0.num_clients());
        let mut l_ij = Vec::with_capacity(self.0.num_clients());
        let mut all_terms = Vec::new();
        for g in self.0.groups.iter() {
            let m = g.len() as f64;
            let items: Vec<f64> = g.iter().map(|&k| base.l_i[k]).collect();
            let terms: Vec<(usize, f64)> = g.iter().map(|&k| (k, 1.0 / m)).collect();
            let li = match self.0.base.weighted_lipschitz(&terms) {
                Some(v) => v,
                None => {
                    method = SmoothnessMethod::UpperBound;
                    items.iter().sum::<f64>() / m
                }
            };
            all_terms.extend(g.iter().map(|&k| (k, 1.0 / (n * m))));
            l_i.push(li);
            l_ij.push(items);
        }
        let l_minus = match self.0.base.weighted_lipschitz(&all_terms) {
            Some(v) => v,
            None => {
                method = SmoothnessMethod::UpperBound;
                l_i.iter().sum::<f64>() / n
            }
        };
        Ok(SmoothnessReport {
            l_minus,
            l_i,
            l_ij: Some(l_ij),
            method,
        })
    }

    fn weighted_lipschitz(&self, terms: &[(usize, f64)]) -> Option<f64> {
        let mut mapped = Vec::new();
        for &(i, w) in terms {
            let g = self.0.group(i);
            let m = g.len() as f64;
            mapped.extend(g.iter().map(|&k| (k, w / m)));
        }
        self.0.base.weighted_lipschitz(&mapped)
    }

    fn component_hessian(&self, i: usize) -> Option<DMatrix<f64>> {
        let g = self.0.group(i);
        let d = self.0.dim();
        let mut h = DMatrix::zeros(d, d);
        for &k in g {
            h += self.0.base.component_hessian(k)?;
        }
        Some(h / g.len() as f64)
    }

    fn initial_point(&self) -> Vec<f64> {
        self.0.base.initial_point()
    }

    fn optimal_value(&self) -> Option<f64> {
        if self.0.partition {
            self.0.base.optimal_value()
        } else {
            None
        }
    }
}

/// All items of a grouped problem, item `(i, j)` scaled by `N / (n m_i)` so
/// that the plain mean over the `N` items equals `f`.
#[derive(Clone, Debug)]
pub struct Flattened {
    grouped: GroupedProblem,
    items: Vec<(usize, f64)>,
}

impl Flattened {
    fn new(grouped: GroupedProblem) -> Self {
        let total = grouped.total_items() as f64;
        let n = grouped.num_clients() as f64;
        let items = grouped
            .groups
            .iter()
            .flat_map(|g| {
                let s = total / (n * g.len() as f64);
                g.iter().map(move |&k| (k, s))
            })
            .collect();
        Self { grouped, items }
    }
}

impl Problem for Flattened {
    fn num_components(&self) -> usize {
        self.items.len()
    }

    fn dim(&self) -> usize {
        self.grouped.dim()
    }

    fn kind(&self) -> ProblemKind {
        ProblemKind::Flattened
    }

    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let (k, s) = self.items[i];
        s * self.grouped.base.component_value_unchecked(k, x)
    }

    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let (k, s) = self.items[i];
        self.grouped.base.component_grad_into(k, x, out);
        if s != 1.0 {
            linalg::scale(s, out);
        }
    }

    fn smoothness(&self) -> Result<SmoothnessReport> {
        let base = self.grouped.base.smoothness()?;
        let client = self.grouped.client_level().smoothness()?;
        let l_i = self.items.iter().map(|&(k, s)| s * base.l_i[k]).collect();
        Ok(SmoothnessReport {
            l_minus: client.l_minus,
            l_i,
            l_ij: None,
            method: client.method,
        })
    }

    fn weighted_lipschitz(&self, terms: &[(usize, f64)]) -> Option<f64> {
        let mapped: Vec<(usize, f64)> = terms
            .iter()
            .map(|&(i, w)| (self.items[i].0, w * self.items[i].1))
            .collect();
        self.grouped.base.weighted_lipschitz(&mapped)
    }

    fn component_hessian(&self, i: usize) -> Option<DMatrix<f64>> {
        let (k, s) = self.items[i];
        self.grouped.base.component_hessian(k).map(|h| h * s)
    }

    fn initial_point(&self) -> Vec<f64> {
        self.grouped.base.initial_point()
    }

    fn optimal_value(&self) -> Option<f64> {
        self.grouped.client_level().optimal_value()
    }
}
