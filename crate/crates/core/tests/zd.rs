use phaseconv_core::zd::*;
use proptest::prelude::*;

fn probs(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, d).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn any_probs() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![probs(2), probs(3), probs(5)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficients_form_a_distribution(p in any_probs(), n in 1u64..=64) {
        let c = canonical_coeffs(&p, n).unwrap();
        prop_assert!((c.c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(c.c.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn coefficients_flatten_geometrically(p in any_probs(), n in 1u64..=64) {
        let c = canonical_coeffs(&p, n).unwrap();
        let bound = c.epsilon.powi(n as i32) + 1e-13;
        prop_assert!(c.max_deviation_from_flat() <= bound, "{} > {}", c.max_deviation_from_flat(), bound);
    }

    #[test]
    fn coefficients_match_enumeration(p in any_probs(), n in 1u32..=6) {
        let fast = canonical_coeffs(&p, n as u64).unwrap();
        let slow = brute_force_coeffs(&p, n).unwrap();
        for (a, b) in fast.c.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn outcomes_are_covariant(p in any_probs(), n in 1u64..=32) {
        let d = p.len();
        let base = outcome_distribution(&p, n, 0).unwrap();
        prop_assert!((base.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for m in 1..d {
            let shifted = outcome_distribution(&p, n, m).unwrap();
            for m1 in 0..d {
                prop_assert!((shifted[(m1 + m) % d] - base[m1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn success_improves_with_copies(p in any_probs(), n in 1u64..=40) {
        let a = success_probability(&p, n).unwrap();
        let b = success_probability(&p, n + 1).unwrap();
        prop_assert!(b >= a - 1e-12, "{} then {}", a, b);
    }
}

#[test]
fn failure_slope_matches_contraction_rate() {
    let p = [0.6, 0.3, 0.1];
    let fit = convergence_fit(&p, &[8, 12, 16, 20, 24]).unwrap();
    assert!(fit.relative_error() < 0.05, "{fit:?}");
}

#[test]
fn degenerate_input_gives_uniform_guess() {
    let p = [1.0, 0.0, 0.0];
    let c = canonical_coeffs(&p, 10).unwrap();
    assert!(c.is_degenerate());
    assert!((success_probability(&p, 10).unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn character_sum_vanishes_off_zero() {
    for d in [2usize, 3, 7] {
        assert!((character_sum(d, 0).re - d as f64).abs() < 1e-12);
        for k in 1..d as i64 {
            assert!(character_sum(d, k).norm() < 1e-12);
        }
    }
}

#[test]
fn enumeration_is_capped() {
    assert!(brute_force_coeffs(&[0.5, 0.5], 13).is_err());
    assert!(brute_force_coeffs_capped(&[0.2; 5], 10, 1000).is_err());
}
