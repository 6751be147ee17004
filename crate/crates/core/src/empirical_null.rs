//! Individualized empirical null: truncated-normal maximum likelihood for the
//! overdispersion slope `phi`, and the corrected Z-scores and control limits
//! that follow from it.
//!
//! Under the null a center's fixed-effects score is `N(0, 1 + phi * n_eff)`.
//! Scores inside `[-B_i, B_i]`, with `B_i = v * sqrt(1 + phi0 * n_eff_i)`,
//! contribute their null density; scores outside contribute only the
//! probability of leaving the interval. `phi` is profiled over a grid of null
//! proportions `pi0`.

use crate::numerics::{self, nelder_mead_minimize, normal_log_pdf, std_normal_cdf};
use crate::{Error, Result};

/// Offset keeping `log(phi + EPS)` finite at `phi = 0`.
const PHI_EPS: f64 = 1e-8;
pub const MIN_CENTERS: usize = 10;
pub const MIN_NULL_SET: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct EnConfig {
    /// Upper-tail percentage defining `v = Phi^-1(1 - q/100)`.
    pub q_percent: f64,
    pub pi0_grid_lo: f64,
    pub pi0_grid_hi: f64,
    pub pi0_grid_step: f64,
    pub optimizer_tol: f64,
    pub max_iter: usize,
}

impl Default for EnConfig {
    fn default() -> Self {
        Self {
            q_percent: 5.0,
            pi0_grid_lo: 0.80,
            pi0_grid_hi: 1.00,
            pi0_grid_step: 0.005,
            optimizer_tol: 1e-8,
            max_iter: 500,
        }
    }
}

impl EnConfig {
    pub fn with_q(q_percent: f64) -> Self {
        Self {
            q_percent,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_percent > 0.0 && self.q_percent < 50.0) {
            return Err(Error::input(format!(
                "q_percent must lie in (0, 50), got {}",
                self.q_percent
            )));
        }
        if !(self.pi0_grid_lo > 0.0 && self.pi0_grid_lo <= self.pi0_grid_hi && self.pi0_grid_hi <= 1.0) {
            return Err(Error::input(format!(
                "pi0 grid must satisfy 0 < lo <= hi <= 1, got [{}, {}]",
                self.pi0_grid_lo, self.pi0_grid_hi
            )));
        }
        if !(self.pi0_grid_step > 0.0) {
            return Err(Error::input(format!(
                "pi0 grid step must be positive, got {}",
                self.pi0_grid_step
            )));
        }
        if !(self.optimizer_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::input("optimizer tolerance and max_iter must be positive"));
        }
        Ok(())
    }

    /// Truncation half-width on the unit-variance scale.
    pub fn v(&self) -> Result<f64> {
        numerics::std_normal_quantile(1.0 - self.q_percent / 100.0)
    }

    /// Null-proportion grid from `lo` to `hi` inclusive.
    pub fn pi0_grid(&self) -> Vec<f64> {
        let n = ((self.pi0_grid_hi - self.pi0_grid_lo) / self.pi0_grid_step + 1e-9).floor() as usize;
        let mut grid: Vec<f64> = (0..=n)
            .map(|i| (self.pi0_grid_lo + i as f64 * self.pi0_grid_step).min(self.pi0_grid_hi))
            .collect();
        if self.pi0_grid_hi - grid[grid.len() - 1] > 1e-12 {
            grid.push(self.pi0_grid_hi);
        }
        grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullFit {
    pub measure_id: String,
    pub phi_hat: f64,
    pub pi0_hat: f64,
    pub phi_init: f64,
    pub v: f64,
    /// Per-center `(A_i, B_i)`.
    pub interval_bounds: Vec<(f64, f64)>,
    /// Membership in the null set `I_0`.
    pub null_set: Vec<bool>,
    pub loglik: f64,
    /// `phi_hat * a_psi`, the variance of the unobserved center effect.
    pub sigma2_alpha_hat: f64,
}

impl NullFit {
    pub fn n_null_set(&self) -> usize {
        self.null_set.iter().filter(|&&m| m).count()
    }
}

/// Starting value `max(0, (s^2 - 1) / mean(n_eff))` from the biweight scale `s`.
pub fn initial_phi(z: &[f64], sizes: &[f64]) -> Result<f64> {
    check_lengths(z, sizes)?;
    let scale = numerics::robust_intercept_scale(z)?.scale;
    let mean_size = sizes.iter().sum::<f64>() / sizes.len() as f64;
    Ok(phi_from_scale(scale, mean_size))
}

pub(crate) fn phi_from_scale(scale: f64, mean_size: f64) -> f64 {
    ((scale * scale - 1.0) / mean_size).max(0.0)
}

pub fn truncation_bounds(phi_init: f64, v: f64, size: f64) -> (f64, f64) {
    let b = v * (1.0 + phi_init * size).sqrt();
    (-b, b)
}

/// Truncated-normal log-likelihood of `(phi, pi0)` with the null set and
/// interval bounds held fixed.
///
/// A term whose argument is not positive makes the result `-inf`.
pub fn null_loglik(phi: f64, pi0: f64, z: &[f64], sizes: &[f64], null_set: &[bool], bounds: &[(f64, f64)]) -> f64 {
    let log_pi0 = pi0.ln();
    let mut total = 0.0;
    for (((&zi, &ni), &inside), &(a, b)) in z.iter().zip(sizes).zip(null_set).zip(bounds) {
        let variance = 1.0 + phi * ni;
        if inside {
            total += log_pi0 + normal_log_pdf(zi, variance);
        } else {
            let sd = variance.sqrt();
            let q = std_normal_cdf(b / sd) - std_normal_cdf(a / sd);
            let mass = 1.0 - pi0 * q;
            if mass <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += mass.ln();
        }
    }
    total
}

/// Fits `(phi, pi0)` by profiling `phi` over the `pi0` grid.
///
/// For each grid value the log-likelihood is maximized over `u = log(phi + eps)`
/// with Nelder-Mead, started from the robust initial estimate. Ties in the
/// profile break toward the larger `pi0`.
pub fn fit_empirical_null(z: &[f64], sizes: &[f64], a_psi: f64, config: &EnConfig) -> Result<NullFit> {
    check_lengths(z, sizes)?;
    config.validate()?;
    if z.len() < MIN_CENTERS {
        return Err(Error::Fitting(format!(
            "empirical null needs at least {MIN_CENTERS} centers, got {}",
            z.len()
        )));
    }
    if let Some(bad) = sizes.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::input(format!("effective sizes must be positive, got {bad}")));
    }

    let v = config.v()?;
    let phi_init = initial_phi(z, sizes)?;
    let bounds: Vec<(f64, f64)> = sizes.iter().map(|&n| truncation_bounds(phi_init, v, n)).collect();
    let null_set: Vec<bool> = z.iter().zip(&bounds).map(|(&zi, &(a, b))| zi >= a && zi <= b).collect();
    let n_null = null_set.iter().filter(|&&m| m).count();
    if n_null < MIN_NULL_SET {
        return Err(Error::Fitting(format!(
            "only {n_null} centers fall inside the null interval (need {MIN_NULL_SET})"
        )));
    }

    let to_phi = |u: f64| (u.exp() - PHI_EPS).max(0.0);
    let u0 = (phi_init + PHI_EPS).ln();
    let mut best: Option<(f64, f64, f64)> = None;
    for pi0 in config.pi0_grid() {
        let neg = |u: f64| -null_loglik(to_phi(u), pi0, z, sizes, &null_set, &bounds);
        let res = match nelder_mead_minimize(neg, u0, config.optimizer_tol, config.max_iter) {
            Ok(res) if res.converged => res,
            _ => continue,
        };
        let loglik = -res.min_value;
        if best.is_none_or(|(_, _, ll)| loglik >= ll) {
            best = Some((to_phi(res.argmin), pi0, loglik));
        }
    }
    let (phi_hat, pi0_hat, loglik) = best.ok_or_else(|| {
        Error::Convergence("Nelder-Mead did not converge at any pi0 grid point".into())
    })?;

    Ok(NullFit {
        measure_id: String::new(),
        phi_hat,
        pi0_hat,
        phi_init,
        v,
        interval_bounds: bounds,
        null_set,
        loglik,
        sigma2_alpha_hat: phi_hat * a_psi,
    })
}

/// Corrected score `z / sqrt(1 + phi * n_eff)`.
pub fn z_empirical_null(z_fe: f64, size: f64, phi_hat: f64) -> f64 {
    z_fe / (1.0 + phi_hat * size).sqrt()
}

/// O/E control limits at `|Z| = alpha_z` after correcting with `phi`.
///
/// `phi = 0` gives the fixed-effects limits.
pub fn control_limits(phi: f64, expected: f64, size: f64, a_psi: f64, alpha_z: f64) -> (f64, f64) {
    let half = alpha_z * (a_psi * size * (1.0 + phi * size)).sqrt() / expected;
    (1.0 - half, 1.0 + half)
}

fn check_lengths(z: &[f64], sizes: &[f64]) -> Result<()> {
    if z.len() != sizes.len() {
        return Err(Error::input(format!(
            "{} Z-scores but {} effective sizes",
            z.len(),
            sizes.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid() {
        let grid = EnConfig::default().pi0_grid();
        assert_eq!(grid.len(), 41);
        assert_eq!(grid[0], 0.8);
        assert!((grid[40] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(EnConfig::with_q(0.0).validate().is_err());
        assert!(EnConfig::with_q(50.0).validate().is_err());
        let bad = EnConfig {
            pi0_grid_lo: 0.9,
            pi0_grid_hi: 0.8,
            ..EnConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!((EnConfig::default().v().unwrap() - 1.644854).abs() < 1e-5);
    }

    #[test]
    fn phi_from_scale_examples() {
        assert_eq!(phi_from_scale(1.0, 37.0), 0.0);
        assert!((phi_from_scale(2.0, 100.0) - 0.03).abs() < 1e-15);
        assert_eq!(phi_from_scale(0.5, 10.0), 0.0);
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(truncation_bounds(0.0, 1.96, 123.0), (-1.96, 1.96));
        let (a, b) = truncation_bounds(0.14, 1.645, 100.0);
        assert!((b - 6.37106).abs() < 1e-4);
        assert_eq!(a, -b);
        assert_eq!(truncation_bounds(0.3, 1.5, 0.0), (-1.5, 1.5));
    }

    #[test]
    fn loglik_examples() {
        let ll = null_loglik(0.0, 1.0, &[0.0], &[55.0], &[true], &[(-1.96, 1.96)]);
        assert!((ll + 0.918939).abs() < 1e-6);
        let ll = null_loglik(0.0, 0.9, &[3.0], &[55.0], &[false], &[(-1.96, 1.96)]);
        assert!((ll - (1.0f64 - 0.9 * 0.95).ln()).abs() < 1e-4);
        assert!((ll + 1.93102).abs() < 1e-4);
        // π0 → 0 with an empty null set
        let ll = null_loglik(0.0, 1e-300, &[3.0, -4.0], &[5.0, 9.0], &[false, false], &[(-1.0, 1.0); 2]);
        assert!(ll.abs() < 1e-12);
    }

    #[test]
    fn loglik_saturates_to_neg_infinity() {
        let ll = null_loglik(0.0, 1.0, &[50.0], &[1.0], &[false], &[(-40.0, 40.0)]);
        assert_eq!(ll, f64::NEG_INFINITY);
    }

    #[test]
    fn correction_examples() {
        assert_eq!(z_empirical_null(2.2, 80.0, 0.0), 2.2);
        assert!((z_empirical_null(3.0, 100.0, 0.14) - 0.774597).abs() < 1e-5);
        assert!((z_empirical_null(-2.5, 50.0, 0.24) + 0.693375).abs() < 1e-5);
    }

    #[test]
    fn control_limit_examples() {
        let (lo, hi) = control_limits(0.0, 100.0, 100.0, 1.0, 1.96);
        assert!((lo - 0.804).abs() < 1e-3 && (hi - 1.196).abs() < 1e-3);
        let (lo, hi) = control_limits(0.14, 100.0, 100.0, 1.0, 1.96);
        assert!((lo - 0.241).abs() < 1e-3 && (hi - 1.759).abs() < 1e-3);
        let (lo, hi) = control_limits(0.0, 1e12, 1e12, 1.0, 1.96);
        assert!((lo - 1.0).abs() < 1e-5 && (hi - 1.0).abs() < 1e-5);
    }

    #[test]
    fn fit_rejects_small_or_degenerate_inputs() {
        let z = vec![0.1; 5];
        assert!(matches!(
            fit_empirical_null(&z, &[10.0; 5], 1.0, &EnConfig::default()),
            Err(Error::Fitting(_))
        ));
        // tight cluster far from zero: robust scale is tiny so every center
        // falls outside its interval
        let z: Vec<f64> = (0..20).map(|i| 40.0 + i as f64 * 1e-3).collect();
        assert!(matches!(
            fit_empirical_null(&z, &[10.0; 20], 1.0, &EnConfig::default()),
            Err(Error::Fitting(_))
        ));
    }
}
