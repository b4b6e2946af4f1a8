use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use super::{Problem, ProblemKind, SmoothnessMethod, SmoothnessReport};
use crate::error::{invalid, Result};
use crate::linalg;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 1_000_000;

/// Symmetric matrix of a quadratic component.
#[derive(Clone, Debug, PartialEq)]
pub enum QuadMatrix {
    /// `scale * tridiag(-1, 2, -1) / 4 + shift * I`.
    Stencil { scale: f64, shift: f64 },
    /// General symmetric tridiagonal matrix plus `shift * I`.
    Tridiagonal {
        diag: Vec<f64>,
        off: Vec<f64>,
        shift: f64,
    },
    Dense(DMatrix<f64>),
}

impl QuadMatrix {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        match self {
            QuadMatrix::Stencil { scale, shift } => {
                linalg::stencil_matvec(x, y);
                for (yk, xk) in y.iter_mut().zip(x) {
                    *yk = scale * *yk + shift * xk;
                }
            }
            QuadMatrix::Tridiagonal { diag, off, shift } => {
                let d = x.len();
                for k in 0..d {
                    let mut v = (diag[k] + shift) * x[k];
                    if k > 0 {
                        v += off[k - 1] * x[k - 1];
                    }
                    if k + 1 < d {
                        v += off[k] * x[k + 1];
                    }
                    y[k] = v;
                }
            }
            QuadMatrix::Dense(m) => {
                for (k, yk) in y.iter_mut().enumerate() {
                    *yk = m.row(k).iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    pub fn to_dense(&self, d: usize) -> DMatrix<f64> {
        match self {
            QuadMatrix::Dense(m) => m.clone(),
            _ => {
                let mut m = DMatrix::zeros(d, d);
                let mut e = vec![0.0; d];
                let mut col = vec![0.0; d];
                for j in 0..d {
                    e[j] = 1.0;
                    self.matvec(&e, &mut col);
                    e[j] = 0.0;
                    for i in 0..d {
                        m[(i, j)] = col[i];
                    }
                }
                m
            }
        }
    }

    /// Spectral norm: closed form for the stencil, power iteration otherwise.
    pub fn spectral_norm(&self, d: usize) -> f64 {
        match self {
            QuadMatrix::Stencil { scale, shift } => {
                let (lo, hi) = linalg::stencil_extremes(d);
                (scale * lo + shift).abs().max((scale * hi + shift).abs())
            }
            _ => linalg::power_method(d, |x, y| self.matvec(x, y), POWER_TOL, POWER_MAX_ITER),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticComponent {
    pub matrix: QuadMatrix,
    pub linear: Vec<f64>,
}

/// `f_i(x) = x^T A_i x / 2 + b_i^T x`.
#[derive(Debug)]
pub struct QuadraticProblem {
    dim: usize,
    components: Vec<QuadraticComponent>,
    x0: Vec<f64>,
    kind: ProblemKind,
    optimum: OnceLock<Option<(Vec<f64>, f64)>>,
}

impl QuadraticProblem {
    pub fn new(dim: usize, components: Vec<QuadraticComponent>, x0: Vec<f64>) -> Result<Self> {
        Self::with_kind(dim, components, x0, ProblemKind::Quadratic)
    }

    pub(crate) fn with_kind(
        dim: usize,
        components: Vec<QuadraticComponent>,
        x0: Vec<f64>,
        kind: ProblemKind,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("quadratic problem needs at least one component"));
        }
        if x0.len() != dim {
            return Err(invalid("starting point has the wrong dimension"));
        }
        for (i, c) in components.iter().enumerate() {
            if c.linear.len() != dim {
                return Err(invalid(format!("linear term of component {i} has wrong length")));
            }
            let ok = match &c.matrix {
                QuadMatrix::Stencil { .. } => true,
                QuadMatrix::Tridiagonal { diag, off, .. } => {
                    diag.len() == dim && off.len() + 1 == dim.max(1)
                }
                QuadMatrix::Dense(m) => m.nrows() == dim && m.ncols() == dim,
            };
            if !ok {
                return Err(invalid(format!("matrix of component {i} has wrong shape")));
            }
        }
        Ok(Self {
            dim,
            components,
            x0,
            kind,
            optimum: OnceLock::new(),
        })
    }

    pub fn components(&self) -> &[QuadraticComponent] {
        &self.components
    }

    /// Mean matrix in its most compact exact form.
    pub fn mean_matrix(&self) -> QuadMatrix {
        let n = self.components.len() as f64;
        let stencils: Option<Vec<(f64, f64)>> = self
            .components
            .iter()
            .map(|c| match c.matrix {
                QuadMatrix::Stencil { scale, shift } => Some((scale, shift)),
                _ => None,
            })
            .collect();
        match stencils {
            Some(s) => {
                let scale = s.iter().map(|v| v.0).sum::<f64>() / n;
                let shift = s.iter().map(|v| v.1).sum::<f64>() / n;
                QuadMatrix::Stencil { scale, shift }
            }
            None => {
                let mut m = DMatrix::zeros(self.dim, self.dim);
                for c in &self.components {
                    m += c.matrix.to_dense(self.dim);
                }
                QuadMatrix::Dense(m / n)
            }
        }
    }

    pub fn mean_linear(&self) -> Vec<f64> {
        let n = self.components.len() as f64;
        let mut b = vec![0.0; self.dim];
        for c in &self.components {
            linalg::axpy(1.0, &c.linear, &mut b);
        }
        linalg::scale(1.0 / n, &mut b);
        b
    }

    /// Smallest eigenvalue of the mean matrix (the PL constant when positive).
    pub fn mean_min_eigenvalue(&self) -> f64 {
        match self.mean_matrix() {
            QuadMatrix::Stencil { scale, shift } => {
                let (lo, hi) = linalg::stencil_extremes(self.dim);
                (scale * lo + shift).min(scale * hi + shift)
            }
            m => linalg::sym_min_eigenvalue(&m.to_dense(self.dim)),
        }
    }

    /// Minimizer and minimum of `f` when the mean matrix is positive definite.
    pub fn optimum(&self) -> Option<&(Vec<f64>, f64)> {
        self.optimum
            .get_or_init(|| {
                let a = self.mean_matrix().to_dense(self.dim);
                let chol = a.cholesky()?;
                let b = DVector::from_vec(self.mean_linear());
                let xs = chol.solve(&(-b));
                let xs: Vec<f64> = xs.iter().cloned().collect();
                let fs = self.value_at(&xs);
                Some((xs, fs))
            })
            .as_ref()
    }
}

impl Problem for QuadraticProblem {
    fn num_components(&self) -> usize {
        self.components.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> ProblemKind {
        self.kind
    }

    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let c = &self.components[i];
        let mut ax = vec![0.0; self.dim];
        c.matrix.matvec(x, &mut ax);
        0.5 * linalg::dot(x, &ax) + linalg::dot(&c.linear, x)
    }

    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let c = &self.components[i];
        c.matrix.matvec(x, out);
        for (o, b) in out.iter_mut().zip(&c.linear) {
            *o += b;
        }
    }

    fn smoothness(&self) -> Result<SmoothnessReport> {
        let l_i = self
            .components
            .iter()
            .map(|c| c.matrix.spectral_norm(self.dim))
            .collect();
        let l_minus = self.mean_matrix().spectral_norm(self.dim);
        let method = if self.kind == ProblemKind::AnalyticExample {
            SmoothnessMethod::ClosedForm
        } else {
            SmoothnessMethod::ExactEigenvalue
        };
        Ok(SmoothnessReport {
            l_minus,
            l_i,
            l_ij: None,
            method,
        })
    }

    fn weighted_lipschitz(&self, terms: &[(usize, f64)]) -> Option<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, w) in terms {
            m += self.components[i].matrix.to_dense(self.dim) * w;
        }
        Some(linalg::sym_spectral_norm(&m))
    }

    fn component_hessian(&self, i: usize) -> Option<DMatrix<f64>> {
        Some(self.components[i].matrix.to_dense(self.dim))
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn optimal_value(&self) -> Option<f64> {
        self.optimum().map(|o| o.1)
    }
}
