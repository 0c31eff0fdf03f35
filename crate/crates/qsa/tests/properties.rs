use proptest::prelude::*;
use qsa::amplitude::ae_distribution;
use qsa::mean::{average_variable, average_variable_binned, FiniteRandomVariable};
use qsa::phase::{bit_split, pe_distribution, pe_distribution_statevector, FixedPhase};
use qsa::qcore::{eigendecompose_unitary, measure_projector, reconstruct, ComplexMatrix, ComplexVector, RandomSource};

fn table() -> impl Strategy<Value = FiniteRandomVariable> {
    prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..6)
        .prop_map(|pairs| FiniteRandomVariable::from_weights(pairs).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_unitaries_decompose(seed in any::<u64>(), dim in 1usize..7) {
        let mut rng = RandomSource::new(seed);
        let u = ComplexMatrix::random_unitary(dim, &mut rng);
        prop_assert!(u.is_unitary());
        let pairs = eigendecompose_unitary(&u).unwrap();
        prop_assert!(pairs.iter().all(|p| (0.0..1.0).contains(&p.phase)));
        prop_assert!(reconstruct(&pairs).max_abs_diff(&u) < 1e-9);
    }

    #[test]
    fn measurement_leaves_a_state(seed in any::<u64>(), dim in 2usize..7, k in 1usize..6) {
        let mut rng = RandomSource::new(seed);
        let psi = ComplexVector::random_state(dim, &mut rng);
        let idx: Vec<usize> = (0..k.min(dim - 1)).collect();
        let proj = ComplexMatrix::basis_projector(dim, &idx);
        let m = measure_projector(&psi, &proj, &mut rng).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.probability));
        prop_assert!(m.post_state.is_state());
    }

    #[test]
    fn phase_law_matches_statevector(theta in 0.0f64..1.0, log_t in 1u32..6) {
        let t = 1u64 << log_t;
        let closed = pe_distribution(theta, t).unwrap();
        let sv = pe_distribution_statevector(theta, t).unwrap();
        prop_assert!((closed.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for (a, b) in closed.iter().zip(&sv) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn bit_split_is_exact(num in 0u128..(1u128 << 40), tau in 1u32..30) {
        let theta = FixedPhase::dyadic(num, 40);
        let s = bit_split(theta.to_f64(), tau);
        prop_assert_eq!(s.reconstruct(), theta);
    }

    #[test]
    fn amplitude_law_is_a_distribution(p in 0.0f64..=1.0, log_t in 1u32..10) {
        let d = ae_distribution(p, 1 << log_t).unwrap();
        prop_assert!((d.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn merging_keeps_moments(x in table()) {
        prop_assert!((x.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(x.outcomes().windows(2).all(|w| w[0] < w[1]));
        let direct: f64 = x.outcomes().iter().zip(x.probs()).map(|(a, p)| a * p).sum();
        prop_assert!((x.mean() - direct).abs() < 1e-12);
    }

    #[test]
    fn median_shift_decomposes_second_moment(x in table(), m in -5.0f64..5.0) {
        let shifted = x.shifted(m);
        let rhs = x.variance() + (x.mean() - m).powi(2);
        prop_assert!((shifted.second_moment() - rhs).abs() < 1e-10 * (1.0 + rhs));
    }

    #[test]
    fn averaging_divides_variance(x in table(), k in 1u64..12) {
        let avg = average_variable(&x, k, 1_000_000).unwrap();
        prop_assert!((avg.mean() - x.mean()).abs() < 1e-10);
        prop_assert!((avg.variance() - x.variance() / k as f64).abs() < 1e-10);
    }

    #[test]
    fn binned_averaging_keeps_the_mean(x in table(), k in 1u64..200) {
        let avg = average_variable_binned(&x, k, 1 << 12).unwrap();
        prop_assert!((avg.mean() - x.mean()).abs() < 1e-10 * (1.0 + x.mean().abs()));
        prop_assert!(avg.variance() <= x.variance() / k as f64 * (1.0 + 1e-9) + 1e-15);
    }
}
