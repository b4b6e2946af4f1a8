//! Small dense-vector helpers and spectral routines.
//!
//! Vectors are plain `f64` slices; the optimizer works in low dimension with
//! many cheap oracle calls, so nothing here allocates unless it returns a
//! new vector.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Eigenvalues of the `d x d` matrix `tridiag(-1, 2, -1) / 4`, ascending.
///
/// The `k`-th eigenvalue of `tridiag(-1, 2, -1)` is `2 - 2 cos(k pi / (d + 1))`.
pub fn stencil_eigenvalues(d: usize) -> Vec<f64> {
    (1..=d)
        .map(|k| (2.0 - 2.0 * (k as f64 * PI / (d as f64 + 1.0)).cos()) / 4.0)
        .collect()
}

/// Smallest and largest eigenvalue of `tridiag(-1, 2, -1) / 4`.
pub fn stencil_extremes(d: usize) -> (f64, f64) {
    let c = (PI / (d as f64 + 1.0)).cos();
    (0.5 * (1.0 - c), 0.5 * (1.0 + c))
}

/// `y = tridiag(-1, 2, -1) x / 4`
pub fn stencil_matvec(x: &[f64], y: &mut [f64]) {
    let d = x.len();
    for k in 0..d {
        let mut v = 2.0 * x[k];
        if k > 0 {
            v -= x[k - 1];
        }
        if k + 1 < d {
            v -= x[k + 1];
        }
        y[k] = 0.25 * v;
    }
}

/// Spectral norm of a symmetric operator by power iteration.
///
/// Iterates until two successive Rayleigh estimates agree to `rel_tol`.
/// The start vector is deterministic with every coordinate nonzero so it is
/// never orthogonal to an eigenvector of the fixtures used here.
pub fn power_method<F>(dim: usize, mut apply: F, rel_tol: f64, max_iter: usize) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..dim).map(|k| 1.0 + 0.1 * ((k * 7 + 3) % 11) as f64).collect();
    let nv = norm(&v);
    scale(1.0 / nv, &mut v);
    let mut w = vec![0.0; dim];
    let mut estimate = 0.0;
    let mut prev_step = f64::INFINITY;
    for _ in 0..max_iter {
        apply(&v, &mut w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        // For symmetric operators ||A v|| with unit v converges to |lambda_max|.
        // The remaining error is extrapolated from the geometric decay of
        // successive steps, which matters when the spectral gap is small.
        let step = (nw - estimate).abs();
        let ratio = if prev_step.is_finite() && prev_step > 0.0 {
            (step / prev_step).min(0.999_999)
        } else {
            0.999_999
        };
        let remaining = step * ratio / (1.0 - ratio);
        let converged = step <= rel_tol * nw && remaining <= rel_tol * nw;
        prev_step = step;
        estimate = nw;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if converged {
            break;
        }
    }
    estimate
}

/// Largest eigenvalue of a symmetric dense matrix.
pub fn sym_max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a symmetric dense matrix.
pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Spectral norm (largest absolute eigenvalue) of a symmetric dense matrix.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max)
}
