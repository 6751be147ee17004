//! Property bodies shared by the proptest suite and the acceptance run.
#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};

use profile_null::baselines::winsorize;
use profile_null::composite::{capped_corr_weights, composite_score, flag, CompositeConfig};
use profile_null::empirical_null::{
    control_limits, fit_empirical_null, null_loglik, truncation_bounds, z_empirical_null, EnConfig,
};
use profile_null::measures::{z_fixed_effects, CenterStat, Direction, MeasureSpec};
use profile_null::numerics::{nelder_mead_minimize, robust_intercept_scale, std_normal_cdf, std_normal_quantile};

pub type PropResult = Result<(), TestCaseError>;

pub fn config(seed: u64, cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn runner(seed: u64, cases: u32) -> TestRunner {
    TestRunner::new(config(seed, cases))
}

// --- strategies -----------------------------------------------------------

/// Sample correlation matrix of a random data matrix; always valid.
pub fn correlation_strategy(max_p: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max_p).prop_flat_map(|p| {
        proptest::collection::vec(-3.0..3.0f64, p * (p + 6)).prop_map(move |raw| {
            let n = p + 6;
            let x = DMatrix::from_row_slice(n, p, &raw);
            let mut c = DMatrix::zeros(p, p);
            let means: Vec<f64> = (0..p).map(|k| x.column(k).mean()).collect();
            for k in 0..p {
                for l in 0..p {
                    let cov: f64 = (0..n).map(|i| (x[(i, k)] - means[k]) * (x[(i, l)] - means[l])).sum();
                    c[(k, l)] = cov;
                }
            }
            let d: Vec<f64> = (0..p).map(|k| c[(k, k)].sqrt()).collect();
            DMatrix::from_fn(p, p, |k, l| if k == l { 1.0 } else { c[(k, l)] / (d[k] * d[l]) })
        })
    })
}

/// Overdispersed null-ish data: sizes and Z-scores with a few outliers.
pub fn null_data_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (12usize..80).prop_flat_map(|n| {
        (
            proptest::collection::vec(1.0..200.0f64, n),
            proptest::collection::vec(-1.0..1.0f64, n),
            proptest::collection::vec(-1.0..1.0f64, n),
            0.0..0.3f64,
        )
            .prop_map(|(sizes, u1, u2, phi)| {
                // Box-Muller from uniform pairs mapped into (0, 1]
                let z = sizes
                    .iter()
                    .zip(u1.iter().zip(&u2))
                    .map(|(&n, (&a, &b))| {
                        let r = (-2.0 * ((a + 1.0) / 2.0).max(1e-12).ln()).sqrt();
                        let g = r * (std::f64::consts::PI * (b + 1.0)).cos();
                        g * (1.0 + phi * n).sqrt()
                    })
                    .collect();
                (z, sizes)
            })
    })
}

// --- numerics ---------------------------------------------------------------

pub fn cdf_quantile_roundtrip(p: f64) -> PropResult {
    let x = std_normal_quantile(p).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((std_normal_cdf(x) - p).abs() <= 1e-9, "p={p}, x={x}");
    Ok(())
}

pub fn cdf_monotone(mut xs: Vec<f64>) -> PropResult {
    xs.sort_by(f64::total_cmp);
    for w in xs.windows(2) {
        prop_assert!(std_normal_cdf(w[0]) <= std_normal_cdf(w[1]), "{} {}", w[0], w[1]);
    }
    Ok(())
}

pub fn nelder_mead_recovers_quadratic_minimum(a: f64, m: f64, init: f64) -> PropResult {
    let tol = 1e-12;
    let r = nelder_mead_minimize(|x| a * (x - m).powi(2), init, tol, 2000).unwrap();
    prop_assert!(r.converged, "{r:?}");
    // the stopping rule bounds a(x - m)^2 by tol, up to the vertex tolerance
    let bound = (tol / a).sqrt() + 1e-8 * (1.0 + m.abs());
    prop_assert!((r.argmin - m).abs() <= bound, "a={a} m={m}: {r:?}");
    Ok(())
}

pub fn robust_location_equivariance(z: Vec<f64>, c: f64) -> PropResult {
    let base = robust_intercept_scale(&z).unwrap();
    let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
    let moved = robust_intercept_scale(&shifted).unwrap();
    prop_assert!((moved.location - base.location - c).abs() <= 1e-9, "{base:?} {moved:?}");
    prop_assert!((moved.scale - base.scale).abs() <= 1e-9, "{base:?} {moved:?}");
    Ok(())
}

// --- measures ---------------------------------------------------------------

pub fn fixed_effects_sign_and_scale(observed: f64, expected: f64, size: f64, c: f64) -> PropResult {
    let spec = MeasureSpec::poisson("M", Direction::HigherIsBetter);
    let stat = |o: f64| CenterStat {
        center_id: "C".into(),
        measure_id: "M".into(),
        observed: o,
        expected,
        effective_size: size,
    };
    let z = z_fixed_effects(&stat(observed), &spec).unwrap().value;
    prop_assert_eq!(z > 0.0, observed > expected);
    let scaled = z_fixed_effects(&stat(expected + c * (observed - expected)), &spec).unwrap().value;
    prop_assert!((scaled - c * z).abs() <= 1e-9 * (1.0 + (c * z).abs()), "{scaled} vs {}", c * z);
    Ok(())
}

// --- empirical null -------------------------------------------------------------

pub fn shrinkage_and_sign(z: f64, size: f64, phi: f64) -> PropResult {
    let zen = z_empirical_null(z, size, phi);
    prop_assert!(zen.abs() <= z.abs());
    prop_assert!(zen == 0.0 || zen.signum() == z.signum());
    if phi * size == 0.0 {
        prop_assert_eq!(zen, z);
    } else if z != 0.0 {
        prop_assert!(zen.abs() < z.abs());
    }
    Ok(())
}

/// Ratio-scale width grows with phi; count-scale half-width grows with size.
pub fn monotone_widening(phi: f64, dphi: f64, size: f64, dsize: f64, alpha_z: f64) -> PropResult {
    let width = |phi: f64, expected: f64, size: f64| {
        let (lo, hi) = control_limits(phi, expected, size, 1.0, alpha_z);
        hi - lo
    };
    prop_assert!(width(phi + dphi, size, size) >= width(phi, size, size));
    let expected = 50.0;
    prop_assert!(width(phi, expected, size + dsize) >= width(phi, expected, size));
    Ok(())
}

pub fn likelihood_ascent(z: Vec<f64>, sizes: Vec<f64>) -> PropResult {
    let cfg = EnConfig::default();
    let Ok(fit) = fit_empirical_null(&z, &sizes, 1.0, &cfg) else {
        // degenerate draws are rejected by contract; nothing to check
        return Ok(());
    };
    let v = cfg.v().unwrap();
    for (i, &(a, b)) in fit.interval_bounds.iter().enumerate() {
        let (ea, eb) = truncation_bounds(fit.phi_init, v, sizes[i]);
        prop_assert!((a - ea).abs() < 1e-12 && (b - eb).abs() < 1e-12);
        prop_assert_eq!(a, -b);
        prop_assert_eq!(fit.null_set[i], z[i] >= a && z[i] <= b);
    }
    let at_fit = null_loglik(fit.phi_hat, fit.pi0_hat, &z, &sizes, &fit.null_set, &fit.interval_bounds);
    for pi0 in cfg.pi0_grid() {
        let start = null_loglik(fit.phi_init, pi0, &z, &sizes, &fit.null_set, &fit.interval_bounds);
        prop_assert!(at_fit >= start - 1e-9, "pi0={pi0}: {at_fit} < {start}");
    }
    prop_assert!(fit.phi_hat >= 0.0 && fit.pi0_hat > 0.0 && fit.pi0_hat <= 1.0);
    Ok(())
}

// --- baselines ------------------------------------------------------------------

pub fn winsorize_idempotent(z: Vec<f64>, q: f64) -> PropResult {
    let once = winsorize(&z, q).unwrap();
    let twice = winsorize(&once, q).unwrap();
    prop_assert_eq!(once, twice);
    Ok(())
}

// --- composite ------------------------------------------------------------------

pub fn capped_weights_positive(c: DMatrix<f64>) -> PropResult {
    for w in capped_corr_weights(&c) {
        prop_assert!(w > 0.0 && w <= 1.0, "{w}");
    }
    Ok(())
}

pub fn permutation_equivariance(c: DMatrix<f64>, z: Vec<f64>, seed: u64) -> PropResult {
    let p = c.nrows();
    let z = &z[..p];
    // deterministic shuffle from the seed
    let mut perm: Vec<usize> = (0..p).collect();
    let mut s = seed;
    for i in (1..p).rev() {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        perm.swap(i, (s >> 33) as usize % (i + 1));
    }
    let cp = DMatrix::from_fn(p, p, |k, l| c[(perm[k], perm[l])]);
    let zp: Vec<f64> = perm.iter().map(|&k| z[k]).collect();
    let w = capped_corr_weights(&c);
    let wp = capped_corr_weights(&cp);
    for k in 0..p {
        prop_assert!((wp[k] - w[perm[k]]).abs() <= 1e-12);
    }
    let a = composite_score(z, &w, &c).unwrap();
    let b = composite_score(&zp, &wp, &cp).unwrap();
    prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    Ok(())
}

pub fn single_measure_reduction(z: f64, w: f64) -> PropResult {
    let c = DMatrix::identity(1, 1);
    let got = composite_score(&[z], &[w], &c).unwrap();
    prop_assert!((got - z).abs() <= 1e-12 * (1.0 + z.abs()));
    Ok(())
}

pub fn flag_monotone(a: f64, b: f64) -> PropResult {
    let cfg = CompositeConfig::default();
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    prop_assert!(flag(lo, &cfg) <= flag(hi, &cfg));
    Ok(())
}
