use crate::error::{invalid, Result};
use crate::sampling::ComposedVariance;

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!("probability {p} outside (0, 1]")));
    }
    Ok(())
}

fn check_nonneg(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !(v.is_finite() && *v >= 0.0) {
            return Err(invalid(format!("{name} = {v} must be finite and nonnegative")));
        }
    }
    Ok(())
}

fn inverse(denominator: f64) -> Result<f64> {
    if denominator > 0.0 {
        Ok(1.0 / denominator)
    } else {
        Err(invalid("all smoothness constants are zero; the stepsize is unbounded"))
    }
}

fn variance_term(a: f64, b: f64, plus_sq: f64, pm_sq: f64) -> f64 {
    ((a - b) * plus_sq + b * pm_sq).max(0.0)
}

/// Largest stepsize admitted by the nonconvex analysis:
/// `1 / (L_- + sqrt((1-p)/p ((A-B) L_{+,w}^2 + B L_{+-,w}^2)))`.
pub fn stepsize_nonconvex(
    l_minus: f64,
    a: f64,
    b: f64,
    plus_sq: f64,
    pm_sq: f64,
    p: f64,
) -> Result<f64> {
    check_p(p)?;
    check_nonneg(&[("L_-", l_minus), ("A", a), ("B", b), ("L_+^2", plus_sq), ("L_+-^2", pm_sq)])?;
    let v = variance_term(a, b, plus_sq, pm_sq);
    inverse(l_minus + ((1.0 - p) / p * v).sqrt())
}

/// Stepsize under the Polyak-Lojasiewicz condition with constant `mu`.
pub fn stepsize_pl(
    l_minus: f64,
    a: f64,
    b: f64,
    plus_sq: f64,
    pm_sq: f64,
    p: f64,
    mu: f64,
) -> Result<f64> {
    check_p(p)?;
    if !(mu.is_finite() && mu > 0.0) {
        return Err(invalid(format!("PL constant {mu} must be positive")));
    }
    check_nonneg(&[("L_-", l_minus), ("A", a), ("B", b), ("L_+^2", plus_sq), ("L_+-^2", pm_sq)])?;
    let v = variance_term(a, b, plus_sq, pm_sq);
    let first = inverse(l_minus + (2.0 * (1.0 - p) / p * v).sqrt())?;
    Ok(first.min(p / (2.0 * mu)))
}

/// Stepsize of the two-level method for a composed variance constant.
pub fn stepsize_composed(l_minus: f64, composed: &ComposedVariance, p: f64) -> Result<f64> {
    check_p(p)?;
    check_nonneg(&[("L_-", l_minus), ("effective variance", composed.effective)])?;
    inverse(l_minus + ((1.0 - p) / p * composed.effective).sqrt())
}

/// Stepsize of the original analysis of PAGE with minibatch `tau`, which
/// only sees the mean-squared smoothness `L_+`.
pub fn stepsize_vanilla(l_minus: f64, l_plus_sq: f64, tau: f64, p: f64) -> Result<f64> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(invalid("batch size must be positive"));
    }
    stepsize_nonconvex(l_minus, 1.0 / tau, 0.0, l_plus_sq, 0.0, p)
}

/// `|S| / (|S| + n)`, balancing refresh and sampling costs.
pub fn default_p(cardinality: f64, n: usize) -> f64 {
    cardinality / (cardinality + n as f64)
}

/// Smallest `T` with `2 delta0 / (gamma T) <= eps`.
pub fn iteration_budget(delta0: f64, eps: f64, gamma: f64) -> Result<usize> {
    check_positive(&[("delta0", delta0), ("eps", eps), ("gamma", gamma)])?;
    let t = (2.0 * delta0 / (gamma * eps)).ceil();
    if t > usize::MAX as f64 {
        return Err(invalid("iteration budget overflows"));
    }
    Ok((t as usize).max(1))
}

fn check_positive(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !(v.is_finite() && *v > 0.0) {
            return Err(invalid(format!("{name} = {v} must be positive")));
        }
    }
    Ok(())
}

/// Predicted total gradient calls `n + 2 |S| T`.
pub fn expected_complexity(n: usize, cardinality: f64, iterations: usize) -> f64 {
    n as f64 + 2.0 * cardinality * iterations as f64
}

/// Expected calls under the accounting used by the optimizer:
/// `n + T (p n + 2 (1-p) |S|)`.
pub fn expected_calls(n: usize, p: f64, raw_size: f64, iterations: usize) -> f64 {
    let nf = n as f64;
    nf + iterations as f64 * (p * nf + 2.0 * (1.0 - p) * raw_size)
}

/// `f(x) - f* + gamma / (2p) |g - grad f(x)|^2`.
pub fn lyapunov(f_x: f64, f_star: f64, gamma: f64, p: f64, estimator_err_sq: f64) -> f64 {
    f_x - f_star + gamma / (2.0 * p) * estimator_err_sq
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nonconvex_formula() {
        let n = 100.0;
        let tau = 10.0;
        let p = tau / (tau + n);
        let g = stepsize_nonconvex(1.0, 0.1, 0.1, 7.0, 1.0, p).unwrap();
        assert!((g - 0.5).abs() < 1e-12);
        assert_eq!(stepsize_nonconvex(4.0, 0.3, 0.1, 5.0, 2.0, 1.0).unwrap(), 0.25);
        assert!(stepsize_nonconvex(1.0, 0.1, 0.1, 1.0, 1.0, 0.0).is_err());
        assert!(stepsize_nonconvex(-1.0, 0.1, 0.1, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn equal_ab_ignores_plus() {
        let a = stepsize_nonconvex(1.0, 0.2, 0.2, 3.0, 1.0, 0.1).unwrap();
        let b = stepsize_nonconvex(1.0, 0.2, 0.2, 300.0, 1.0, 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pl_branches() {
        let g = stepsize_pl(1.0, 0.1, 0.1, 1.0, 1.0, 0.5, 0.01).unwrap();
        assert!((g - 1.0 / (1.0 + 0.2f64.sqrt())).abs() < 1e-15);
        assert_eq!(stepsize_pl(1.0, 0.1, 0.1, 1.0, 1.0, 0.5, 1e6).unwrap(), 0.5 / 2e6);
        assert!(stepsize_pl(1.0, 0.1, 0.1, 1.0, 1.0, 0.5, 0.0).is_err());
        // small mu: the first branch, with the variance doubled
        let small = stepsize_pl(1.0, 0.3, 0.1, 2.0, 1.0, 0.2, 1e-12).unwrap();
        let doubled = stepsize_nonconvex(1.0, 0.3, 0.1, 4.0, 2.0, 0.2).unwrap();
        assert!((small - doubled).abs() < 1e-15);
    }

    #[test]
    fn budget_and_complexity() {
        assert_eq!(iteration_budget(1.0, 0.01, 0.5).unwrap(), 400);
        assert_eq!(iteration_budget(1.0, 100.0, 0.5).unwrap(), 1);
        assert_eq!(iteration_budget(1.0, 0.01, 0.25).unwrap(), 800);
        assert!(iteration_budget(0.0, 0.01, 0.5).is_err());
        assert_eq!(expected_complexity(1000, 10.0, 400), 9000.0);
        assert_eq!(expected_complexity(1000, 10.0, 0), 1000.0);
        assert!((default_p(10.0, 1000) - 10.0 / 1010.0).abs() < 1e-15);
        assert_eq!(default_p(7.0, 7), 0.5);
    }

    #[test]
    fn per_iteration_cost_at_default_p() {
        for (s, n) in [(1.0, 1000usize), (10.0, 1000), (50.0, 60)] {
            let p = default_p(s, n);
            assert!(p * n as f64 + (1.0 - p) * s <= 2.0 * s + 1e-12);
        }
    }

    #[test]
    fn composed_reduces() {
        let c = ComposedVariance { effective: 0.3 };
        let a = stepsize_composed(2.0, &c, 0.25).unwrap();
        let b = stepsize_nonconvex(2.0, 0.3, 0.0, 1.0, 0.0, 0.25).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn nonincreasing_in_variance(
            l in 0.1f64..10.0,
            a in 0.0f64..2.0,
            da in 0.0f64..1.0,
            pm in 0.0f64..10.0,
            p in 0.01f64..1.0,
            dp in 0.0f64..0.5,
        ) {
            let base = stepsize_nonconvex(l, a, a, 1.0, pm, p).unwrap();
            prop_assert!(stepsize_nonconvex(l, a + da, a + da, 1.0, pm, p).unwrap() <= base);
            prop_assert!(stepsize_nonconvex(l, a, a, 1.0, pm * 2.0, p).unwrap() <= base);
            let p_small = (p - dp).max(1e-3);
            prop_assert!(stepsize_nonconvex(l, a, a, 1.0, pm, p_small).unwrap() <= base);
        }
    }
}
