//! Finite-sum objectives `f(x) = (1/n) sum_i f_i(x)`, their two-level grouped
//! form, and smoothness-constant estimation.
//!
//! Component indices are 0-based throughout the crate.

mod grouped;
mod quadratic;

pub use grouped::{ClientLevel, Flattened, GroupedProblem, Subset};
pub use quadratic::{QuadMatrix, QuadraticComponent, QuadraticProblem};

use std::ops::Deref;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, dist_sq, norm_sq};

/// A point in the optimization space. All coordinates are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if !linalg::all_finite(&coords) {
            return Err(invalid("point has non-finite coordinates"));
        }
        Ok(Point(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Point(coords)
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Quadratic,
    Logistic,
    AnalyticExample,
    /// Subset of another problem's components.
    Subset,
    /// Client means of a grouped problem.
    ClientLevel,
    /// Grouped problem flattened to its individual components.
    Flattened,
}

/// How a [`SmoothnessReport`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmoothnessMethod {
    ExactEigenvalue,
    ClosedForm,
    UpperBound,
}

#[derive(Clone, Debug)]
pub struct SmoothnessReport {
    /// Lipschitz constant of the full gradient.
    pub l_minus: f64,
    /// Per-component Lipschitz constants.
    pub l_i: Vec<f64>,
    /// Per-client item constants, for grouped problems.
    pub l_ij: Option<Vec<Vec<f64>>>,
    pub method: SmoothnessMethod,
}

impl SmoothnessReport {
    pub fn mean_l_i(&self) -> f64 {
        self.l_i.iter().sum::<f64>() / self.l_i.len() as f64
    }
}

/// Squared weighted smoothness constants `(L_{+,w}^2, L_{+-,w}^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedConstants {
    pub plus_sq: f64,
    pub pm_sq: f64,
}

/// Finite-sum oracle. Implementations are immutable and may be shared
/// across threads.
pub trait Problem: Send + Sync {
    fn num_components(&self) -> usize;

    fn dim(&self) -> usize;

    fn kind(&self) -> ProblemKind;

    /// `f_i(x)`; `i` and the length of `x` are not checked.
    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64;

    /// Writes `grad f_i(x)` into `out`; `i` and lengths are not checked.
    fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]);

    fn value_at(&self, x: &[f64]) -> f64 {
        let n = self.num_components();
        let total: f64 = (0..n).map(|i| self.component_value_unchecked(i, x)).sum();
        total / n as f64
    }

    /// Mean of the component gradients, accumulated in index order.
    fn full_grad_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.num_components();
        let mut buf = vec![0.0; out.len()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            self.component_grad_into(i, x, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        linalg::scale(1.0 / n as f64, out);
    }

    fn smoothness(&self) -> Result<SmoothnessReport> {
        Err(Error::Unsupported(format!(
            "no smoothness estimate for {:?} problems",
            self.kind()
        )))
    }

    /// Lipschitz constant of `grad sum_k w_k f_{i_k}` for the given weighted
    /// components, when the problem can certify one.
    fn weighted_lipschitz(&self, _terms: &[(usize, f64)]) -> Option<f64> {
        None
    }

    /// Constant Hessian of component `i`, for quadratic components.
    fn component_hessian(&self, _i: usize) -> Option<DMatrix<f64>> {
        None
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    /// `inf f`, when known in closed form.
    fn optimal_value(&self) -> Option<f64> {
        None
    }
}

fn check_dim(problem: &dyn Problem, x: &[f64]) -> Result<()> {
    if x.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

pub fn component_grad(problem: &dyn Problem, i: usize, x: &Point) -> Result<Point> {
    let n = problem.num_components();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    check_dim(problem, x)?;
    let mut out = vec![0.0; problem.dim()];
    problem.component_grad_into(i, x, &mut out);
    Ok(Point(out))
}

pub fn component_value(problem: &dyn Problem, i: usize, x: &Point) -> Result<f64> {
    let n = problem.num_components();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    check_dim(problem, x)?;
    Ok(problem.component_value_unchecked(i, x))
}

pub fn full_grad(problem: &dyn Problem, x: &Point) -> Result<Point> {
    check_dim(problem, x)?;
    let mut out = vec![0.0; problem.dim()];
    problem.full_grad_into(x, &mut out);
    Ok(Point(out))
}

pub fn value(problem: &dyn Problem, x: &Point) -> Result<f64> {
    check_dim(problem, x)?;
    Ok(problem.value_at(x))
}

pub fn lipschitz_constants(problem: &dyn Problem) -> Result<SmoothnessReport> {
    problem.smoothness()
}

fn check_simplex(w: &[f64]) -> Result<()> {
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("weights must be finite and nonnegative"));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Weighted constants from per-component Lipschitz constants:
/// `L_{+,w}^2 = L_{+-,w}^2 = (1/n) sum_i L_i^2 / (n w_i)`.
pub fn weighted_constants(l: &[f64], w: &[f64]) -> Result<WeightedConstants> {
    if l.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: l.len(),
            got: w.len(),
        });
    }
    if l.is_empty() {
        return Err(invalid("no components"));
    }
    check_simplex(w)?;
    let n = l.len() as f64;
    let mut total = 0.0;
    for (i, (&li, &wi)) in l.iter().zip(w).enumerate() {
        if li == 0.0 {
            continue;
        }
        if wi == 0.0 {
            return Err(invalid(format!(
                "weight of component {i} is zero but its constant is {li}"
            )));
        }
        total += li * li / (n * wi);
    }
    let value = total / n;
    Ok(WeightedConstants {
        plus_sq: value,
        pm_sq: value,
    })
}

/// Tight weighted constants of a problem with constant component Hessians:
/// `L_{+,w}^2 = lambda_max(M)` and `L_{+-,w}^2 = lambda_max(M - H^2)` with
/// `M = (1/n) sum_i H_i^2 / (n w_i)` and `H` the mean Hessian.
pub fn exact_weighted_constants(problem: &dyn Problem, w: &[f64]) -> Result<WeightedConstants> {
    let n = problem.num_components();
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: w.len(),
        });
    }
    check_simplex(w)?;
    let d = problem.dim();
    let nf = n as f64;
    let mut second = DMatrix::<f64>::zeros(d, d);
    let mut mean = DMatrix::<f64>::zeros(d, d);
    for (i, &wi) in w.iter().enumerate() {
        let h = problem.component_hessian(i).ok_or_else(|| {
            Error::Unsupported(format!(
                "exact weighted constants need constant Hessians ({:?} problem)",
                problem.kind()
            ))
        })?;
        mean += &h / nf;
        let h2 = &h * &h;
        if h2.iter().all(|v| *v == 0.0) {
            continue;
        }
        if wi == 0.0 {
            return Err(invalid(format!(
                "weight of component {i} is zero but its Hessian is not"
            )));
        }
        second += h2 / (nf * nf * wi);
    }
    let plus_sq = linalg::sym_max_eigenvalue(&second).max(0.0);
    let spread = &second - &mean * &mean;
    let pm_sq = linalg::sym_max_eigenvalue(&spread).max(0.0);
    Ok(WeightedConstants { plus_sq, pm_sq })
}

/// Tight constants when the problem has constant Hessians, the
/// per-component bound otherwise.
pub fn best_weighted_constants(
    problem: &dyn Problem,
    report: &SmoothnessReport,
    w: &[f64],
) -> Result<WeightedConstants> {
    match exact_weighted_constants(problem, w) {
        Ok(c) => Ok(c),
        Err(Error::Unsupported(_)) => weighted_constants(&report.l_i, w),
        Err(e) => Err(e),
    }
}

/// Lower estimate of the smallest valid `L_{+-,w}^2`: the largest observed
/// ratio `[(1/n) sum_i |g_i(x)-g_i(y)|^2/(n w_i) - |g(x)-g(y)|^2] / |x-y|^2`
/// over `pairs` random pairs drawn around the problem's initial point.
pub fn empirical_hessian_variance<R: Rng + ?Sized>(
    problem: &dyn Problem,
    w: &[f64],
    pairs: usize,
    rng: &mut R,
) -> f64 {
    let n = problem.num_components();
    assert_eq!(w.len(), n, "one weight per component");
    let d = problem.dim();
    let nf = n as f64;
    let center = problem.initial_point();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let mut mean_diff = vec![0.0; d];
    let mut best: f64 = 0.0;
    for _ in 0..pairs {
        for k in 0..d {
            x[k] = center[k] + gaussian(rng);
            y[k] = center[k] + gaussian(rng);
        }
        let denom = dist_sq(&x, &y);
        if denom == 0.0 {
            continue;
        }
        let mut weighted = 0.0;
        mean_diff.iter_mut().for_each(|v| *v = 0.0);
        for (i, &wi) in w.iter().enumerate() {
            problem.component_grad_into(i, &x, &mut gx);
            problem.component_grad_into(i, &y, &mut gy);
            let mut sq = 0.0;
            for k in 0..d {
                let diff = gx[k] - gy[k];
                sq += diff * diff;
                mean_diff[k] += diff;
            }
            if sq > 0.0 {
                weighted += sq / (nf * wi);
            }
        }
        linalg::scale(1.0 / nf, &mut mean_diff);
        let ratio = (weighted / nf - norm_sq(&mean_diff)) / denom;
        best = best.max(ratio);
    }
    best
}

/// Maximum mixed relative error between analytic component gradients and
/// central differences with step `h`, over all components and coordinates.
/// The error is `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check(problem: &dyn Problem, x: &Point, h: f64) -> f64 {
    let d = problem.dim();
    let mut g = vec![0.0; d];
    let mut xp = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..problem.num_components() {
        problem.component_grad_into(i, x, &mut g);
        for k in 0..d {
            let orig = xp[k];
            xp[k] = orig + h;
            let fp = problem.component_value_unchecked(i, &xp);
            xp[k] = orig - h;
            let fm = problem.component_value_unchecked(i, &xp);
            xp[k] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let err = (g[k] - numeric).abs() / g[k].abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

/// Standard normal variate by the Box-Muller transform.
pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the logarithm is finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weighted_constants_uniform() {
        let c = weighted_constants(&[1.0, 2.0, 3.0], &[1.0 / 3.0; 3]).unwrap();
        assert!((c.plus_sq - 14.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.plus_sq, c.pm_sq);
    }

    #[test]
    fn weighted_constants_optimal_weights() {
        let c = weighted_constants(&[1.0, 2.0, 3.0], &[1.0 / 6.0, 1.0 / 3.0, 0.5]).unwrap();
        assert!((c.plus_sq - 4.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_constants_homogeneous() {
        let c = weighted_constants(&[2.5; 4], &[0.25; 4]).unwrap();
        assert!((c.plus_sq - 6.25).abs() < 1e-12);
    }

    #[test]
    fn weighted_constants_rejects_bad_weights() {
        assert!(weighted_constants(&[1.0, 1.0], &[1.0, 0.0]).is_err());
        assert!(weighted_constants(&[1.0, 1.0], &[0.5, 0.4]).is_err());
        assert!(weighted_constants(&[1.0], &[0.5, 0.5]).is_err());
        // a zero weight is fine when the component is constant
        let c = weighted_constants(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((c.plus_sq - 0.25).abs() < 1e-15);
    }

    #[test]
    fn point_rejects_nan() {
        assert!(Point::new(vec![1.0, f64::NAN]).is_err());
        assert_eq!(Point::zeros(3).dim(), 3);
    }

    proptest! {
        #[test]
        fn optimal_weights_never_worse(l in proptest::collection::vec(0.01f64..100.0, 1..40)) {
            let n = l.len();
            let total: f64 = l.iter().sum();
            let q: Vec<f64> = l.iter().map(|v| v / total).collect();
            let qsum: f64 = q.iter().sum();
            prop_assume!((qsum - 1.0).abs() <= 1e-12);
            let opt = weighted_constants(&l, &q).unwrap().plus_sq;
            let uni = weighted_constants(&l, &vec![1.0 / n as f64; n]).unwrap().plus_sq;
            let mean = total / n as f64;
            prop_assert!((opt - mean * mean).abs() <= 1e-12 * (1.0 + mean * mean));
            prop_assert!(opt <= uni * (1.0 + 1e-12));
        }
    }
}
