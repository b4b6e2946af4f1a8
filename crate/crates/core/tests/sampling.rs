use pagesample_core::harness::random_spec;
use pagesample_core::sampling::{
    composed_variance_exact, lemma3_rhs, variance_exact, SamplingKind,
};
use pagesample_core::SamplingSpec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [&str; 6] = ["uniform", "importance", "nice", "independent", "extended-nice", "full-batch"];

fn vectors(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
}

fn small_spec(rng: &mut ChaCha8Rng, n: usize) -> SamplingSpec {
    let kind = ["uniform", "nice", "importance"][rng.gen_range(0..3)];
    random_spec(kind, n, rng.gen_range(1..=n), rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_kind_is_unbiased_and_meets_its_constants(
        kind in 0usize..6,
        n in 1usize..6,
        tau_frac in 0.0f64..1.0,
        seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tau = 1 + (tau_frac * n as f64) as usize;
        let spec = random_spec(KINDS[kind], n, tau.min(n), &mut rng).unwrap();
        let v = variance_exact(&spec, &vectors(&mut rng, n, 3)).unwrap();
        prop_assert!(v.mean_err <= 1e-12);
        prop_assert!(v.variance <= v.rhs_bound + 1e-12);
        prop_assert!((v.variance - v.rhs_bound).abs() <= 1e-12 * v.rhs_bound.max(1.0));
    }

    #[test]
    fn expected_distinct_indices_match_cardinality(
        n in 1usize..7,
        tau_frac in 0.0f64..1.0,
        seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tau = (1 + (tau_frac * n as f64) as usize).min(n);
        let vs = vectors(&mut rng, n, 2);
        for name in ["nice", "independent"] {
            let spec = random_spec(name, n, tau, &mut rng).unwrap();
            let v = variance_exact(&spec, &vs).unwrap();
            prop_assert!((v.expected_distinct - spec.expected_cardinality).abs() <= 1e-12);
            if let SamplingKind::Independent { p } = &spec.kind {
                prop_assert!((spec.expected_cardinality - p.iter().sum::<f64>()).abs() <= 1e-12);
            }
        }
        for name in ["uniform", "importance"] {
            let spec = random_spec(name, n, tau, &mut rng).unwrap();
            let v = variance_exact(&spec, &vs).unwrap();
            prop_assert!(v.expected_distinct <= tau as f64 + 1e-12);
        }
    }

    #[test]
    fn composed_estimator_is_unbiased_and_within_its_bound(
        clients in 1usize..4,
        seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outer = small_spec(&mut rng, clients);
        let sizes: Vec<usize> = (0..clients).map(|_| rng.gen_range(1..=3)).collect();
        let inner: Vec<SamplingSpec> = sizes.iter().map(|&m| small_spec(&mut rng, m)).collect();
        let vs: Vec<Vec<Vec<f64>>> = sizes.iter().map(|&m| vectors(&mut rng, m, 2)).collect();
        let v = composed_variance_exact(&outer, &inner, &vs).unwrap();
        prop_assert!(v.mean_err <= 1e-12);
        let rhs = lemma3_rhs(&outer, &inner, &vs).unwrap();
        prop_assert!(v.variance <= rhs + 1e-12);
    }

    #[test]
    fn draws_stay_in_range(kind in 0usize..6, n in 1usize..40, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(KINDS[kind], n, 1 + n / 3, &mut rng).unwrap();
        for _ in 0..20 {
            let d = spec.draw(&mut rng);
            prop_assert!(d.terms.windows(2).all(|w| w[0].0 < w[1].0));
            prop_assert!(d.terms.iter().all(|&(i, c)| i < n && c.is_finite() && c > 0.0));
        }
    }
}

#[test]
fn flat_importance_weights_reduce_to_uniform() {
    for n in 1..20 {
        for tau in 1..5 {
            let u = SamplingSpec::uniform(n, tau).unwrap();
            let q = SamplingSpec::importance(vec![1.0 / n as f64; n], tau).unwrap();
            assert_eq!((u.a, u.b, &u.weights), (q.a, q.b, &q.weights));
            assert_eq!(u.expected_cardinality, q.expected_cardinality);
        }
    }
}

#[test]
fn table_constants() {
    let n = 7.0;
    let nice = SamplingSpec::nice(7, 3).unwrap();
    assert!((nice.a - (n - 3.0) / (3.0 * (n - 1.0))).abs() < 1e-15);
    assert_eq!(nice.a, nice.b);
    let p = vec![0.2, 0.5, 0.9];
    let ind = SamplingSpec::independent(p.clone()).unwrap();
    let odds: f64 = p.iter().map(|v| v / (1.0 - v)).sum();
    assert!((ind.a - 1.0 / odds).abs() < 1e-15);
    assert_eq!(ind.b, 0.0);
    let full = SamplingSpec::full_batch(5).unwrap();
    assert_eq!((full.a, full.b, full.expected_cardinality), (0.0, 0.0, 5.0));
}
