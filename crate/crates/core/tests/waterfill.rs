use hbf_core::su::{waterfill, waterfill_with_level};
use proptest::prelude::*;

/// Water level found by bisection on `sum (mu - N0/g)^+ = P`.
fn level_by_bisection(gains: &[f64], power: f64, n0: f64) -> f64 {
    let used = |mu: f64| -> f64 { gains.iter().filter(|g| **g > 0.0).map(|g| (mu - n0 / g).max(0.0)).sum() };
    let (mut lo, mut hi) = (0.0, 1.0);
    while used(hi) < power {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if used(mid) < power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn kkt_conditions_hold(
        gains in prop::collection::vec(prop_oneof![Just(0.0), 1e-6f64..100.0], 1..8),
        power in 1e-3f64..100.0,
        n0 in 1e-3f64..10.0,
    ) {
        prop_assume!(gains.iter().any(|g| *g > 0.0));
        let (p, mu) = waterfill_with_level(&gains, power, n0).unwrap();
        prop_assert!((p.iter().sum::<f64>() - power).abs() <= 1e-9 * power.max(1.0));
        for (pi, g) in p.iter().zip(&gains) {
            prop_assert!(*pi >= 0.0);
            if *pi > 0.0 {
                prop_assert!((pi + n0 / g - mu).abs() <= 1e-9 * mu.max(1.0));
            } else if *g > 0.0 {
                prop_assert!(n0 / g >= mu - 1e-9 * mu.max(1.0));
            }
        }
        let oracle = level_by_bisection(&gains, power, n0);
        prop_assert!((oracle - mu).abs() <= 1e-9 * mu.max(1.0), "{} vs {}", oracle, mu);
    }
}

#[test]
fn known_allocations() {
    assert_eq!(waterfill(&[1.0, 1.0], 2.0, 1.0).unwrap(), vec![1.0, 1.0]);
    let p = waterfill(&[2.0, 1.0], 1.0, 1.0).unwrap();
    assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
}
