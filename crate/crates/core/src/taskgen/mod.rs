//! Synthetic problems: noisy tridiagonal quadratics with controlled
//! heterogeneity, small analytic examples with known constants, and
//! stratified grouping of an existing problem.

mod file;

pub use file::{read_task, task_from_str, task_to_string, write_task, TASK_FORMAT_VERSION};

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg;
use crate::objective::{
    gaussian, GroupedProblem, Problem, ProblemKind, QuadMatrix, QuadraticComponent,
    QuadraticProblem,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    /// Gaussian scale and offset noise, shifted so `lambda_min(mean A) = lambda`.
    ControlledLpm,
    /// Exponential scale noise, so every component constant is at least the
    /// noiseless one.
    ControlledLi,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::ControlledLpm => "lpm",
            TaskKind::ControlledLi => "li",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lpm" | "controlled-lpm" => Ok(TaskKind::ControlledLpm),
            "li" | "controlled-li" => Ok(TaskKind::ControlledLi),
            other => Err(invalid(format!("unknown task kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskMeta {
    pub kind: TaskKind,
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub s: f64,
    pub seed: u64,
}

/// A generated quadratic task: `A_i = scale_i * tridiag(-1, 2, -1)/4 + shift I`.
#[derive(Clone, Debug)]
pub struct QuadraticTask {
    pub meta: TaskMeta,
    pub scales: Vec<f64>,
    pub shift: f64,
    pub linear: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
}

impl QuadraticTask {
    pub fn problem(&self) -> Result<QuadraticProblem> {
        let components = self
            .scales
            .iter()
            .zip(&self.linear)
            .map(|(&scale, b)| QuadraticComponent {
                matrix: QuadMatrix::Stencil {
                    scale,
                    shift: self.shift,
                },
                linear: b.clone(),
            })
            .collect();
        QuadraticProblem::new(self.meta.d, components, self.x0.clone())
    }
}

fn check_sizes(n: usize, d: usize, s: f64) -> Result<()> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if d < 2 {
        return Err(invalid("d must be at least 2"));
    }
    if !(s.is_finite() && s >= 0.0) {
        return Err(invalid("noise scale must be nonnegative"));
    }
    Ok(())
}

fn start_point(d: usize) -> Vec<f64> {
    let mut x0 = vec![0.0; d];
    x0[0] = (d as f64).sqrt();
    x0
}

/// Exponential(1) variate by inversion.
fn exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln()
}

/// Quadratic task whose Hessian variance grows with `s`; the mean matrix is
/// shifted to have smallest eigenvalue exactly `lambda`.
pub fn gen_controlled_lpm(n: usize, d: usize, lambda: f64, s: f64, seed: u64) -> Result<QuadraticTask> {
    check_sizes(n, d, s)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(invalid("lambda must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scales = Vec::with_capacity(n);
    let mut linear = Vec::with_capacity(n);
    for _ in 0..n {
        let nu_s = 1.0 + s * gaussian(&mut rng);
        let nu_b = s * gaussian(&mut rng);
        let mut b = vec![0.0; d];
        b[0] = nu_s / 4.0 * (-1.0 + nu_b);
        scales.push(nu_s);
        linear.push(b);
    }
    // The mean of scaled stencils is a scaled stencil.
    let mean_scale = scales.iter().sum::<f64>() / n as f64;
    let (lo, hi) = linalg::stencil_extremes(d);
    let lambda_min = (mean_scale * lo).min(mean_scale * hi);
    Ok(QuadraticTask {
        meta: TaskMeta {
            kind: TaskKind::ControlledLpm,
            n,
            d,
            lambda,
            s,
            seed,
        },
        scales,
        shift: lambda - lambda_min,
        linear,
        x0: start_point(d),
    })
}

/// Quadratic task whose component constants spread out as `s` grows.
pub fn gen_controlled_li(n: usize, d: usize, s: f64, seed: u64) -> Result<QuadraticTask> {
    check_sizes(n, d, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scales = Vec::with_capacity(n);
    let mut linear = Vec::with_capacity(n);
    for _ in 0..n {
        let nu_s = 1.0 + s * exponential(&mut rng);
        let nu_b = s * gaussian(&mut rng);
        let mut b = vec![0.0; d];
        b[0] = -0.25 + nu_b;
        scales.push(nu_s);
        linear.push(b);
    }
    Ok(QuadraticTask {
        meta: TaskMeta {
            kind: TaskKind::ControlledLi,
            n,
            d,
            lambda: 0.0,
            s,
            seed,
        },
        scales,
        shift: 0.0,
        linear,
        x0: start_point(d),
    })
}

/// Closed-form constants of an analytic example.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleConstants {
    pub l_minus: f64,
    pub mean_l_i: f64,
    pub l_plus_sq: f64,
    pub l_pm_sq: f64,
    /// Per-group Hessian variances, for grouped examples.
    pub group_pm_sq: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct ExampleFixture {
    pub problem: Arc<QuadraticProblem>,
    pub grouped: Option<GroupedProblem>,
    pub constants: ExampleConstants,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExampleParams {
    /// Half the components `(a+b)x^2/2`, half `(b-a)x^2/2`; `n` even.
    Opposed { n: usize, a: f64, b: f64 },
    /// `f_1 = b x^2/2`, all other components zero.
    Single { n: usize, b: f64 },
    /// `g` groups of `m` items; items of the first group are `b1 x^2/2`, all
    /// others zero.
    Groups { b1: f64, g: usize, m: usize },
}

fn scalar_problem(coefficients: &[f64]) -> Result<QuadraticProblem> {
    let comps = coefficients
        .iter()
        .map(|&c| QuadraticComponent {
            matrix: QuadMatrix::Dense(DMatrix::from_element(1, 1, c)),
            linear: vec![0.0],
        })
        .collect();
    QuadraticProblem::with_kind(1, comps, vec![1.0], ProblemKind::AnalyticExample)
}

/// One-dimensional examples whose smoothness constants are known exactly.
pub fn example_fixture(params: ExampleParams) -> Result<ExampleFixture> {
    match params {
        ExampleParams::Opposed { n, a, b } => {
            if n == 0 || n % 2 == 1 {
                return Err(invalid("the opposed example needs a positive even n"));
            }
            if b < 0.0 {
                return Err(invalid("b must be nonnegative"));
            }
            let coeffs: Vec<f64> = (0..n).map(|i| if i < n / 2 { a + b } else { b - a }).collect();
            let l_plus_sq = 0.5 * ((a + b).powi(2) + (a - b).powi(2));
            Ok(ExampleFixture {
                problem: Arc::new(scalar_problem(&coeffs)?),
                grouped: None,
                constants: ExampleConstants {
                    l_minus: b,
                    mean_l_i: 0.5 * ((a + b).abs() + (a - b).abs()),
                    l_plus_sq,
                    l_pm_sq: l_plus_sq - b * b,
                    group_pm_sq: None,
                },
            })
        }
        ExampleParams::Single { n, b } => {
            if n < 2 || b < 0.0 {
                return Err(invalid("the single-component example needs n >= 2 and b >= 0"));
            }
            let mut coeffs = vec![0.0; n];
            coeffs[0] = b;
            let nf = n as f64;
            Ok(ExampleFixture {
                problem: Arc::new(scalar_problem(&coeffs)?),
                grouped: None,
                constants: ExampleConstants {
                    l_minus: b / nf,
                    mean_l_i: b / nf,
                    l_plus_sq: b * b / nf,
                    l_pm_sq: b * b / nf - (b / nf).powi(2),
                    group_pm_sq: None,
                },
            })
        }
        ExampleParams::Groups { b1, g, m } => {
            if g == 0 || m == 0 || b1 < 0.0 {
                return Err(invalid("the grouped example needs g, m >= 1 and b1 >= 0"));
            }
            let coeffs: Vec<f64> = (0..g * m).map(|k| if k < m { b1 } else { 0.0 }).collect();
            let problem = Arc::new(scalar_problem(&coeffs)?);
            let grouped = stratify(problem.clone(), g, StratifyRule::Contiguous)?;
            let gf = g as f64;
            Ok(ExampleFixture {
                problem,
                grouped: Some(grouped),
                constants: ExampleConstants {
                    l_minus: b1 / gf,
                    mean_l_i: b1 / gf,
                    l_plus_sq: b1 * b1 / gf,
                    l_pm_sq: (1.0 / gf - 1.0 / (gf * gf)) * b1 * b1,
                    group_pm_sq: Some(vec![0.0; g]),
                },
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StratifyRule {
    Contiguous,
    /// Components sorted by their Lipschitz constant before chunking, so
    /// that each group holds similar components.
    BySortedLi,
}

/// Splits the `n` components into `g` groups of `n / g`.
pub fn stratify(problem: Arc<dyn Problem>, g: usize, rule: StratifyRule) -> Result<GroupedProblem> {
    let n = problem.num_components();
    if g == 0 || !n.is_multiple_of(g) {
        return Err(invalid(format!("{g} groups do not divide {n} components")));
    }
    let m = n / g;
    let order: Vec<usize> = match rule {
        StratifyRule::Contiguous => (0..n).collect(),
        StratifyRule::BySortedLi => {
            let l = problem.smoothness()?.l_i;
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| l[a].total_cmp(&l[b]));
            idx
        }
    };
    let groups = order.chunks(m).map(|c| c.to_vec()).collect();
    GroupedProblem::new(problem, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::exact_weighted_constants;

    #[test]
    fn lpm_shift_gives_lambda() {
        let t = gen_controlled_lpm(200, 10, 0.001, 0.5, 1).unwrap();
        let p = t.problem().unwrap();
        assert!((p.mean_min_eigenvalue() - 0.001).abs() < 1e-10);
        assert_eq!(t.x0[0], 10f64.sqrt());
        assert!(t.x0[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lpm_noiseless_is_homogeneous() {
        let t = gen_controlled_lpm(20, 5, 0.01, 0.0, 3).unwrap();
        assert!(t.scales.iter().all(|&v| v == 1.0));
        assert!(t.linear.iter().all(|b| b == &t.linear[0]));
        let p = t.problem().unwrap();
        let w = vec![1.0 / 20.0; 20];
        let c = exact_weighted_constants(&p, &w).unwrap();
        assert!(c.pm_sq < 1e-12);
    }

    #[test]
    fn li_scales_at_least_one() {
        let t = gen_controlled_li(500, 10, 10.0, 5).unwrap();
        assert!(t.scales.iter().all(|&v| v >= 1.0));
        assert_eq!(t.shift, 0.0);
        let l = t.problem().unwrap().smoothness().unwrap().l_i;
        let hi = linalg::stencil_extremes(10).1;
        for (li, s) in l.iter().zip(&t.scales) {
            assert!((li - s * hi).abs() <= 1e-12 * li);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_controlled_lpm(50, 4, 0.1, 0.7, 42).unwrap();
        let b = gen_controlled_lpm(50, 4, 0.1, 0.7, 42).unwrap();
        assert_eq!(a.scales, b.scales);
        assert_eq!(a.linear, b.linear);
        assert_eq!(a.shift, b.shift);
        let c = gen_controlled_lpm(50, 4, 0.1, 0.7, 43).unwrap();
        assert_ne!(a.scales, c.scales);
    }

    #[test]
    fn generator_errors() {
        assert!(gen_controlled_lpm(0, 10, 0.1, 0.1, 0).is_err());
        assert!(gen_controlled_lpm(10, 1, 0.1, 0.1, 0).is_err());
        assert!(gen_controlled_lpm(10, 3, -0.1, 0.1, 0).is_err());
        assert!(gen_controlled_li(10, 3, -1.0, 0).is_err());
    }

    #[test]
    fn fixture_errors() {
        assert!(example_fixture(ExampleParams::Opposed { n: 3, a: 1.0, b: 1.0 }).is_err());
        assert!(example_fixture(ExampleParams::Single { n: 1, b: 1.0 }).is_err());
    }

    #[test]
    fn stratify_shapes() {
        let t = gen_controlled_li(12, 3, 1.0, 0).unwrap();
        let p: Arc<dyn Problem> = Arc::new(t.problem().unwrap());
        assert!(stratify(p.clone(), 5, StratifyRule::Contiguous).is_err());
        let one = stratify(p.clone(), 1, StratifyRule::Contiguous).unwrap();
        assert_eq!(one.group_sizes(), vec![12]);
        let sorted = stratify(p.clone(), 4, StratifyRule::BySortedLi).unwrap();
        let l = p.smoothness().unwrap().l_i;
        let maxes: Vec<f64> = sorted
            .groups()
            .iter()
            .map(|g| g.iter().map(|&k| l[k]).fold(0.0, f64::max))
            .collect();
        assert!(maxes.windows(2).all(|w| w[0] <= w[1]));
    }
}
