mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(common::config(0x5eed_0001, 256))]

    #[test]
    fn cdf_quantile_round_trip(p in 0.001..0.999f64) {
        cdf_quantile_roundtrip(p)?;
    }

    #[test]
    fn cdf_is_monotone(xs in proptest::collection::vec(-40.0..40.0f64, 2..64)) {
        cdf_monotone(xs)?;
    }

    #[test]
    fn nelder_mead_on_quadratics(a in 0.01..100.0f64, m in -100.0..100.0f64, init in -100.0..100.0f64) {
        nelder_mead_recovers_quadratic_minimum(a, m, init)?;
    }

    #[test]
    fn robust_location_is_shift_equivariant(
        z in proptest::collection::vec(-5.0..5.0f64, 5..60),
        c in -100.0..100.0f64,
    ) {
        prop_assume!(z.iter().any(|&v| v != z[0]));
        robust_location_equivariance(z, c)?;
    }

    #[test]
    fn z_fe_sign_and_scale(
        o in 0.0..500.0f64,
        e in 0.1..500.0f64,
        n in 0.1..500.0f64,
        c in -10.0..10.0f64,
    ) {
        fixed_effects_sign_and_scale(o, e, n, c)?;
    }

    #[test]
    fn empirical_null_shrinks_toward_zero(z in -20.0..20.0f64, n in 0.0..2000.0f64, phi in 0.0..2.0f64) {
        shrinkage_and_sign(z, n, phi)?;
    }

    #[test]
    fn control_limits_widen(
        phi in 0.0..1.0f64,
        dphi in 0.0..1.0f64,
        n in 0.5..5000.0f64,
        dn in 0.0..5000.0f64,
        alpha_z in 0.5..4.0f64,
    ) {
        monotone_widening(phi, dphi, n, dn, alpha_z)?;
    }

    #[test]
    fn winsorize_is_idempotent(z in proptest::collection::vec(-50.0..50.0f64, 1..100), q in 0.0..49.9f64) {
        winsorize_idempotent(z, q)?;
    }

    #[test]
    fn capped_weights_are_positive(c in correlation_strategy(6)) {
        capped_weights_positive(c)?;
    }

    #[test]
    fn composite_is_permutation_equivariant(
        c in correlation_strategy(6),
        z in proptest::collection::vec(-4.0..4.0f64, 6),
        seed in any::<u64>(),
    ) {
        permutation_equivariance(c, z, seed)?;
    }

    #[test]
    fn single_measure_composite_is_the_score(z in -10.0..10.0f64, w in 1e-3..1e3f64) {
        single_measure_reduction(z, w)?;
    }

    #[test]
    fn flag_is_monotone(a in -5.0..5.0f64, b in -5.0..5.0f64) {
        flag_monotone(a, b)?;
    }
}

proptest! {
    #![proptest_config(common::config(0x5eed_0002, 48))]

    #[test]
    fn fit_ascends_from_the_initial_value((z, sizes) in null_data_strategy()) {
        likelihood_ascent(z, sizes)?;
    }
}
