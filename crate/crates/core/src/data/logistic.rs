use nalgebra::DMatrix;

use super::SparseDataset;
use crate::error::{invalid, Result};
use crate::linalg;
use crate::objective::{Problem, ProblemKind, SmoothnessMethod, SmoothnessReport};

/// Two-class softmax regression with the nonconvex penalty
/// `lambda * sum_k x_k^2 / (1 + x_k^2)`.
///
/// The variable is `x = [x_1 | x_2]` in dimension `2d`; sample `i` has loss
/// `log(exp(a_i^T x_1) + exp(a_i^T x_2)) - a_i^T x_{y_i}`, and the penalty is
/// part of every component.
#[derive(Clone, Debug)]
pub struct LogisticProblem {
    rows: Vec<Vec<(usize, f64)>>,
    labels: Vec<u8>,
    d: usize,
    lambda: f64,
}

impl LogisticProblem {
    pub fn new(data: &SparseDataset, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid("lambda must be nonnegative"));
        }
        if data.n() == 0 {
            return Err(invalid("dataset is empty"));
        }
        Ok(Self {
            // shift to 0-based feature indices
            rows: data
                .rows
                .iter()
                .map(|r| r.iter().map(|&(k, v)| (k - 1, v)).collect())
                .collect(),
            labels: data.labels.clone(),
            d: data.d,
            lambda,
        })
    }

    pub fn features(&self) -> usize {
        self.d
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn logits(&self, i: usize, x: &[f64]) -> (f64, f64) {
        let (x1, x2) = x.split_at(self.d);
        let mut z1 = 0.0;
        let mut z2 = 0.0;
        for &(k, v) in &self.rows[i] {
            z1 += v * x1[k];
            z2 += v * x2[k];
        }
        (z1, z2)
    }

    fn row_norm_sq(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, v)| v * v).sum()
    }

    /// Penalty value `lambda * sum_k x_k^2 / (1 + x_k^2)`.
    pub fn regularizer(&self, x: &[f64]) -> f64 {
        self.lambda * x.iter().map(|v| v * v / (1.0 + v * v)).sum::<f64>()
    }
}

/// `log(exp(a) + exp(b))` without overflow.
fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl Problem for LogisticProblem {
    fn num_components(&self) -> usize {
        self.rows.len()
    }

    fn dim(&self) -> usize {
        2 * self.d
    }

    fn kind(&self) -> ProblemKind {
        ProblemKind::Logistic
    }

    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let (z1, z2) = self.logits(i, x);
        let zy = if self.labels[i] == 1 { z1 } else { z2 };
        log_sum_exp(z1, z2) - zy + self.regularizer(x)
    }

    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let (z1, z2) = self.logits(i, x);
        // softmax probability of class 1, computed stably
        let s1 = 1.0 / (1.0 + (z2 - z1).exp());
        let s2 = 1.0 - s1;
        let (c1, c2) = if self.labels[i] == 1 {
            (s1 - 1.0, s2)
        } else {
            (s1, s2 - 1.0)
        };
        for (o, &xk) in out.iter_mut().zip(x) {
            let q = 1.0 + xk * xk;
            *o = 2.0 * self.lambda * xk / (q * q);
        }
        let d = self.d;
        for &(k, v) in &self.rows[i] {
            out[k] += c1 * v;
            out[d + k] += c2 * v;
        }
    }

    fn smoothness(&self) -> Result<SmoothnessReport> {
        let n = self.rows.len();
        let l_i = (0..n)
            .map(|i| 0.5 * self.row_norm_sq(i) + 2.0 * self.lambda)
            .collect();
        let all: Vec<(usize, f64)> = (0..n).map(|i| (i, 1.0 / n as f64)).collect();
        let l_minus = self
            .weighted_lipschitz(&all)
            .expect("logistic problems always provide a bound");
        Ok(SmoothnessReport {
            l_minus,
            l_i,
            l_ij: None,
            method: SmoothnessMethod::UpperBound,
        })
    }

    /// Upper bound `lambda_max(sum_k w_k a_k a_k^T) / 2 + 2 lambda sum_k w_k`.
    fn weighted_lipschitz(&self, terms: &[(usize, f64)]) -> Option<f64> {
        let d = self.d;
        let mut m = DMatrix::<f64>::zeros(d, d);
        let mut total_w = 0.0;
        for &(i, w) in terms {
            total_w += w;
            let row = &self.rows[i];
            for &(a, va) in row {
                for &(b, vb) in row {
                    m[(a, b)] += w * va * vb;
                }
            }
        }
        Some(0.5 * linalg::sym_max_eigenvalue(&m).max(0.0) + 2.0 * self.lambda * total_w.abs())
    }
}
